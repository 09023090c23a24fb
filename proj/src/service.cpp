#include "assayplan/service.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "assayplan/reports.hpp"
#include "httplib.h"

namespace assayplan {

using nlohmann::json;

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

ServiceResponse error(int status, const std::string& message, json extra = json::object()) {
  extra["schema_version"] = kApiSchemaVersion;
  extra["error"] = message;
  return {status, std::move(extra)};
}

void check_schema_version(const json& request) {
  if (!request.is_object()) throw std::invalid_argument("request body must be a JSON object");
  if (request.contains("schema_version") && request["schema_version"] != kApiSchemaVersion)
    throw std::invalid_argument("unsupported schema_version");
}

json functionals_json(const Functionals& f) { return {{"H", f.H}, {"L", f.L}, {"g_mean", f.g_mean}}; }

json measured_json(const Dataset& d, const CandidateState& s) {
  json m = json::object();
  for (auto j : members(s.measured)) m[d.assays[j].name] = *s.known[d.assays[j].outcome_feature];
  return m;
}

}  // namespace

json top_analogs(const Dataset& d, const BeliefWeights& w, std::size_t k) {
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return w.normalized[a] > w.normalized[b]; });
  json out = json::array();
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    const auto i = order[r];
    json e{{"record", i + 1}, {"id", d.record_ids[i]}, {"weight", w.normalized[i]}};
    e["target"] = d.targets[i] ? json(*d.targets[i]) : json(nullptr);
    out.push_back(std::move(e));
  }
  return out;
}

json SessionOverrides::to_json() const {
  json j = json::object();
  if (tau) j["tau"] = *tau;
  if (epsilon) j["epsilon"] = *epsilon;
  if (n_e) j["ne"] = *n_e;
  if (n_itr) j["iters"] = *n_itr;
  if (seed) j["seed"] = *seed;
  return j;
}

SessionOverrides SessionOverrides::from_json(const json& j) {
  SessionOverrides o;
  if (j.is_null()) return o;
  if (!j.is_object()) throw std::invalid_argument("config must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "tau" || key == "epsilon") {
      if (!v.is_number()) throw std::invalid_argument(key + " must be a number");
      (key == "tau" ? o.tau : o.epsilon) = v.get<double>();
    } else if (key == "ne" || key == "iters") {
      if (!v.is_number_integer()) throw std::invalid_argument(key + " must be an integer");
      (key == "ne" ? o.n_e : o.n_itr) = v.get<int>();
    } else if (key == "seed") {
      if (!v.is_number_unsigned()) throw std::invalid_argument("seed must be a non-negative integer");
      o.seed = v.get<std::uint64_t>();
    } else {
      throw std::invalid_argument("unknown config key: " + key);
    }
  }
  return o;
}

SessionOverrides SessionOverrides::merged(const SessionOverrides& top) const {
  SessionOverrides o = *this;
  if (top.tau) o.tau = top.tau;
  if (top.epsilon) o.epsilon = top.epsilon;
  if (top.n_e) o.n_e = top.n_e;
  if (top.n_itr) o.n_itr = top.n_itr;
  if (top.seed) o.seed = top.seed;
  return o;
}

SessionService::SessionService(const Dataset& dataset, ServiceConfig config)
    : data_(&dataset), config_(std::move(config)) {
  Environment(*data_, config_.env).check_config();
  if (!config_.journal.empty() && std::filesystem::exists(config_.journal)) replay();
}

EnvConfig SessionService::env_config(const SessionOverrides& o) const {
  EnvConfig c = config_.env;
  if (o.tau) c.reward.tau = *o.tau;
  if (o.epsilon) c.reward.epsilon = *o.epsilon;
  return c;
}

std::shared_ptr<Session> SessionService::find(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::vector<std::string> SessionService::session_ids() const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

std::optional<std::pair<CandidateState, Belief>> SessionService::snapshot(const std::string& id) const {
  const auto s = find(id);
  if (!s) return std::nullopt;
  std::lock_guard lock(s->mutex);
  return std::make_pair(s->state, s->belief);
}

void SessionService::append_journal(const json& event) {
  if (config_.journal.empty()) return;
  std::lock_guard lock(journal_mutex_);
  std::ofstream out(config_.journal, std::ios::app);
  if (!out) throw std::runtime_error("cannot open journal " + config_.journal.string());
  out << event.dump() << '\n';
  out.flush();
}

void SessionService::replay() {
  std::ifstream in(config_.journal);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = "journal line " + std::to_string(lineno);
    json ev;
    try {
      ev = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    const auto type = ev.value("event", "");
    const auto id = ev.value("session_id", "");
    if (type == "create") {
      const auto r = apply_create(ev, id, false);
      if (r.status != 201) throw std::runtime_error(where + ": " + r.body.value("error", "create failed"));
    } else if (type == "outcomes") {
      const auto s = find(id);
      if (!s) throw std::runtime_error(where + ": unknown session " + id);
      std::lock_guard lock(s->mutex);
      const auto r = apply_outcomes(*s, ev, false);
      if (r.status != 200) throw std::runtime_error(where + ": " + r.body.value("error", "outcomes failed"));
    } else if (type == "recommendation") {
      if (const auto s = find(id)) {
        std::lock_guard lock(s->mutex);
        s->events.push_back(ev);
      }
    } else {
      throw std::runtime_error(where + ": unknown event '" + type + "'");
    }
  }
}

ServiceResponse SessionService::health() const {
  std::shared_lock lock(sessions_mutex_);
  return {200, json{{"schema_version", kApiSchemaVersion},
                    {"status", "ok"},
                    {"version", kVersion},
                    {"sessions", sessions_.size()},
                    {"records", data_->num_records()}}};
}

ServiceResponse SessionService::create_session(const json& request) {
  try {
    check_schema_version(request);
  } catch (const std::invalid_argument& e) {
    return error(400, e.what());
  }
  return apply_create(request, std::nullopt, true);
}

ServiceResponse SessionService::apply_create(const json& request, std::optional<std::string> id, bool journal) {
  std::vector<std::pair<std::string, double>> values;
  SessionOverrides overrides;
  try {
    const json features = request.value("features", json::object());
    if (!features.is_object()) throw std::invalid_argument("features must be an object");
    for (const auto& [name, v] : features.items()) {
      if (!v.is_number()) throw std::invalid_argument("feature " + name + " must be a number");
      values.emplace_back(name, v.get<double>());
    }
    overrides = SessionOverrides::from_json(request.value("config", json::object()));
  } catch (const std::invalid_argument& e) {
    return error(400, e.what());
  }

  auto session = std::make_shared<Session>();
  try {
    session->state = make_candidate(*data_, values);
  } catch (const UnknownFeatureError& e) {
    return error(400, e.what());
  }
  if (config_.require_predictors) {
    const auto missing = missing_predictors(*data_, session->state);
    if (!missing.empty()) return error(422, "missing required predictor", {{"missing", missing}});
  }
  try {
    Environment env(*data_, env_config(overrides));
    env.check_config();
    session->belief = env.evaluate(session->state);
  } catch (const std::exception& e) {
    return error(400, e.what());
  }
  session->overrides = overrides;

  json event;
  {
    std::unique_lock lock(sessions_mutex_);
    if (!id) id = "s" + std::to_string(next_id_);
    if (sessions_.count(*id)) return error(409, "duplicate session id " + *id);
    if (id->size() > 1 && id->front() == 's') {
      try {
        next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(id->substr(1)) + 1);
      } catch (const std::exception&) {
      }
    }
    session->id = *id;
    event = json{{"schema_version", kApiSchemaVersion},
                 {"event", "create"},
                 {"session_id", *id},
                 {"time", request.value("time", utc_timestamp())},
                 {"features", request.value("features", json::object())},
                 {"config", overrides.to_json()}};
    session->events.push_back(event);
    sessions_[*id] = session;
  }
  if (journal) append_journal(event);

  json body{{"schema_version", kApiSchemaVersion},
            {"session_id", session->id},
            {"step", session->state.step},
            {"config", overrides.to_json()}};
  body.update(functionals_json(session->belief.f));
  const auto& w = session->belief.weights.normalized;
  double ess = 0.0;
  for (double x : w) ess += x * x;
  body["weights"] = {{"n_records", w.size()},
                     {"effective_sample_size", 1.0 / ess},
                     {"max_weight", *std::max_element(w.begin(), w.end())},
                     {"top", top_analogs(*data_, session->belief.weights, 3)}};
  return {201, std::move(body)};
}

ServiceResponse SessionService::recommendation(const std::string& id, const SessionOverrides& query,
                                               bool include_pareto) {
  const auto s = find(id);
  if (!s) return error(404, "unknown session " + id);
  std::lock_guard lock(s->mutex);
  const auto o = s->overrides.merged(query);
  json key = o.to_json();
  key["pareto"] = include_pareto;
  const auto cache_key = key.dump();
  if (const auto it = s->recommendation_cache.find(cache_key); it != s->recommendation_cache.end())
    return {200, it->second};

  const EnvConfig ec = env_config(o);
  Environment env(*data_, ec);
  try {
    env.check_config();
  } catch (const ConfigError& e) {
    return error(400, e.what());
  }
  if (env.is_terminal(s->state, s->belief.f.H))
    return error(409, "session is terminal", {{"terminal", true}, {"H", s->belief.f.H}});

  EnsembleConfig ens;
  ens.n_e = o.n_e.value_or(config_.n_e);
  ens.base_seed = o.seed.value_or(config_.seed);
  ens.planner = config_.planner;
  ens.planner.n_itr = o.n_itr.value_or(config_.n_itr);
  ens.threads = config_.threads;
  json body;
  try {
    const auto policies = run_ensemble(env, s->state, ens);
    const auto m = build_mlasp(policies, env, s->state, {config_.advance, ens.base_seed});
    const auto root_votes = vote_actions(policies, key_of(env, s->state));
    const auto names = data_->assay_names();
    json votes = json::array(), top2 = json::array();
    for (const auto& a : top_k_actions(root_votes, root_votes.counts.size() + 1, env))
      votes.push_back({{"action", to_string(a, names)}, {"votes", root_votes.counts.at(a)}});
    for (const auto& a : top_k_actions(root_votes, 2, env)) top2.push_back(to_string(a, names));
    body = json{{"schema_version", kApiSchemaVersion},
                {"session_id", id},
                {"step", s->state.step},
                {"config",
                 {{"tau", ec.reward.tau},
                  {"epsilon", ec.reward.epsilon},
                  {"ne", ens.n_e},
                  {"iters", ens.planner.n_itr},
                  {"seed", ens.base_seed}}},
                {"mlasp", mlasp_json(m, env)},
                {"votes", votes},
                {"abstentions", root_votes.abstentions},
                {"top2", top2}};
    if (include_pareto)
      body["pareto"] = pareto_json(
          pareto_sweep(*data_, ec, s->state, ens, config_.pareto_grid, SweepKind::tau, {config_.advance, ens.base_seed}),
          env);
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
  s->recommendation_cache[cache_key] = body;
  json event{{"schema_version", kApiSchemaVersion},
             {"event", "recommendation"},
             {"session_id", id},
             {"time", utc_timestamp()},
             {"step", s->state.step},
             {"config", body["config"]},
             {"first_action", body["mlasp"]["steps"].empty() ? json("eox") : body["mlasp"]["steps"][0]["action"]}};
  s->events.push_back(event);
  append_journal(event);
  return {200, std::move(body)};
}

ServiceResponse SessionService::record_outcomes(const std::string& id, const json& request) {
  const auto s = find(id);
  if (!s) return error(404, "unknown session " + id);
  try {
    check_schema_version(request);
  } catch (const std::invalid_argument& e) {
    return error(400, e.what());
  }
  std::lock_guard lock(s->mutex);
  return apply_outcomes(*s, request, true);
}

ServiceResponse SessionService::apply_outcomes(Session& s, const json& request, bool journal) {
  const json outcomes = request.value("outcomes", json());
  if (!outcomes.is_object() || outcomes.empty()) return error(400, "outcomes must be a non-empty object");
  AssaySet batch = 0;
  std::map<std::size_t, double> by_assay;
  for (const auto& [name, v] : outcomes.items()) {
    const auto j = data_->find_assay(name);
    if (!j) return error(400, "unknown assay: " + name);
    if (!v.is_number()) return error(400, "outcome for " + name + " must be a number");
    if (contains(s.state.measured, *j)) return error(409, "assay already measured: " + name);
    batch |= assay_bit(*j);
    by_assay[*j] = v.get<double>();
  }
  Environment env(*data_, env_config(s.overrides));
  const Action a = Action::of(batch);
  std::vector<double> values;
  std::vector<Observation> obs;
  for (const auto& [j, v] : by_assay) {
    values.push_back(v);
    obs.emplace_back(data_->assays[j].outcome_feature, v);
  }
  s.state = env.apply_values(s.state, a, values);
  update_weights_in_place(s.belief.weights, obs, *data_, env.kernel());
  s.belief.f = evaluate(s.state, s.belief.weights, env.targets());
  s.recommendation_cache.clear();

  json event{{"schema_version", kApiSchemaVersion},
             {"event", "outcomes"},
             {"session_id", s.id},
             {"time", request.value("time", utc_timestamp())},
             {"outcomes", outcomes}};
  s.events.push_back(event);
  if (journal) append_journal(event);

  json body{{"schema_version", kApiSchemaVersion},
            {"session_id", s.id},
            {"step", s.state.step},
            {"measured", measured_json(*data_, s.state)},
            {"terminal", env.is_terminal(s.state, s.belief.f.H)},
            {"top_analogs", top_analogs(*data_, s.belief.weights, 5)}};
  body.update(functionals_json(s.belief.f));
  return {200, std::move(body)};
}

ServiceResponse SessionService::belief(const std::string& id, std::size_t top_k) const {
  const auto s = find(id);
  if (!s) return error(404, "unknown session " + id);
  std::lock_guard lock(s->mutex);
  const auto analogs = top_analogs(*data_, s->belief.weights, top_k);
  double sum = 0.0;
  for (const auto& a : analogs) sum += a["weight"].get<double>();
  json body{{"schema_version", kApiSchemaVersion},
            {"session_id", id},
            {"step", s->state.step},
            {"measured", measured_json(*data_, s->state)},
            {"top_k", top_k},
            {"analogs", analogs},
            {"weight_sum", sum}};
  body.update(functionals_json(s->belief.f));
  return {200, std::move(body)};
}

namespace {

void reply(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
  try {
    return req.body.empty() ? json::object() : json::parse(req.body);
  } catch (const json::exception& e) {
    reply(res, error(400, std::string("malformed JSON: ") + e.what()));
    return std::nullopt;
  }
}

SessionOverrides query_overrides(const httplib::Request& req) {
  SessionOverrides o;
  auto num = [&](const char* k) -> std::optional<double> {
    if (!req.has_param(k)) return std::nullopt;
    const auto v = req.get_param_value(k);
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(std::string("bad value for ") + k);
    return x;
  };
  o.tau = num("tau");
  o.epsilon = num("epsilon");
  if (auto v = num("ne")) o.n_e = static_cast<int>(*v);
  if (auto v = num("iters")) o.n_itr = static_cast<int>(*v);
  if (req.has_param("seed")) o.seed = std::stoull(req.get_param_value("seed"));
  return o;
}

}  // namespace

void SessionService::mount(httplib::Server& server) {
  server.Get("/health", [this](const httplib::Request&, httplib::Response& res) { reply(res, health()); });
  server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res)) reply(res, create_session(*body));
  });
  server.Get("/sessions/:id/recommendation", [this](const httplib::Request& req, httplib::Response& res) {
    SessionOverrides q;
    bool pareto = true;
    try {
      q = query_overrides(req);
      if (req.has_param("pareto")) pareto = req.get_param_value("pareto") != "0";
    } catch (const std::exception& e) {
      reply(res, error(400, e.what()));
      return;
    }
    reply(res, recommendation(req.path_params.at("id"), q, pareto));
  });
  server.Post("/sessions/:id/outcomes", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res)) reply(res, record_outcomes(req.path_params.at("id"), *body));
  });
  server.Get("/sessions/:id/belief", [this](const httplib::Request& req, httplib::Response& res) {
    std::size_t k = 5;
    try {
      if (req.has_param("top_k")) k = std::stoul(req.get_param_value("top_k"));
    } catch (const std::exception&) {
      reply(res, error(400, "top_k must be a non-negative integer"));
      return;
    }
    reply(res, belief(req.path_params.at("id"), k));
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    reply(res, error(500, what));
  });
}

}  // namespace assayplan
