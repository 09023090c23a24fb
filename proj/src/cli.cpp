#include "assayplan/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <pthread.h>

#include "CLI11.hpp"
#include "assayplan/reports.hpp"
#include "assayplan/scenario.hpp"
#include "assayplan/service.hpp"
#include "assayplan/synthetic.hpp"
#include "httplib.h"
#include "text_util.hpp"

namespace assayplan {

namespace {

namespace fs = std::filesystem;
using detail::format_double;
using detail::trim;

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kIoFailure = 2;

std::string default_grid_text() {
  std::string s;
  for (double v : default_sweep_grid()) s += (s.empty() ? "" : ",") + format_double(v);
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  const auto x = detail::parse_double(v);
  if (!x) throw RunConfigError(key + ": expected a number, got '" + v + "'");
  return *x;
}

long long to_int(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x != static_cast<double>(static_cast<long long>(x))) throw RunConfigError(key + ": expected an integer");
  return static_cast<long long>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto t = std::string(trim(v));
    if (t.empty() || t.front() == '-') throw std::invalid_argument("");
    const auto x = std::stoull(t, &used);
    if (used != t.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw RunConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw RunConfigError(key + ": expected true or false");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (const auto& p : detail::split(v, ',')) out.push_back(to_double(key, p));
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::ios_base::failure("cannot write " + p.string());
}

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Loads and prepares the dataset; I/O and parse failures become IoError.
Dataset load_prepared(const RunConfig& c) {
  if (c.dataset.empty() || c.schema.empty()) throw RunConfigError("--dataset and --schema are required");
  Schema schema;
  Dataset raw;
  try {
    schema = load_schema(c.schema);
    raw = load_dataset(c.dataset, schema);
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
  return compute_feature_stats(std::move(raw));
}

CandidateState candidate_of(const RunConfig& c, const Dataset& d) {
  auto values = c.candidate;
  if (c.candidate_record > 0) {
    if (c.candidate_record > d.num_records()) throw RunConfigError("candidate_record is out of range");
    for (std::size_t k = 0; k < d.num_features(); ++k)
      if (d.features[k].kind == FeatureKind::predictor)
        values.emplace_back(d.features[k].name, d.value(c.candidate_record - 1, k));
  }
  return make_candidate(d, values);
}

EnvConfig resolved_env(const RunConfig& c, const Dataset& d) {
  EnvConfig e = c.env;
  if (e.reward.rho.empty()) {
    e.reward.rho.assign(std::max<std::size_t>(1, d.cost_components.size()), 0.0);
    e.reward.rho[0] = 1.0;
  }
  if (!d.cost_components.empty() && e.reward.rho.size() != d.cost_components.size())
    throw ConfigError("rho has " + std::to_string(e.reward.rho.size()) + " entries but the schema declares " +
                      std::to_string(d.cost_components.size()) + " cost components");
  return e;
}

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::validate: return "validate";
    case Command::plan: return "plan";
    case Command::benchmark: return "benchmark";
    case Command::serve: return "serve";
    case Command::scenario: return "scenario";
  }
  return "?";
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"dataset", "", "historical records CSV"},
      {"schema", "", "schema file for the dataset"},
      {"out", "out", "output directory"},
      {"seed", "2024", "master seed (ensemble base seed, benchmark master seed)"},
      {"mode", "cost", "reward: cost (-rho.c per batch) or info (uncertainty reduction per cost)"},
      {"rho", "", "trade-off weights per cost component; empty = first component only"},
      {"gamma", "0.95", "discount factor"},
      {"penalty", "-1000000", "reward for reaching a state with L < tau"},
      {"horizon", "0", "maximum batch steps; 0 = number of assays"},
      {"epsilon", "0.1", "terminal uncertainty threshold on H"},
      {"tau", "0", "goal-likelihood threshold on L"},
      {"m", "0", "maximum assays per batch; 0 = unlimited"},
      {"penalize_unmet_terminal", "auto", "penalize ending with H > epsilon: auto, true or false"},
      {"lambda_w", "1", "similarity kernel temperature"},
      {"target_leak_guard", "true", "keep the target-coinciding assay out of distances"},
      {"ne", "", "ensemble size; default 50 (plan), 20 (benchmark, serve)"},
      {"iters", "", "MCTS iterations per tree; default 20000 (plan), 5000 (benchmark), 2000 (serve)"},
      {"c_ucb", "5", "UCB1 exploration constant"},
      {"k_action", "2", "action widening coefficient"},
      {"alpha_action", "0.5", "action widening exponent"},
      {"k_state", "1", "outcome widening coefficient"},
      {"alpha_state", "0.5", "outcome widening exponent"},
      {"rollout_depth", "-1", "rollout step cap; negative = until terminal"},
      {"threads", "0", "worker threads; 0 = hardware concurrency"},
      {"mlasp_advance", "expected", "MLASP outcome rule: expected or sampled"},
      {"sweep", "tau", "Pareto sweep: tau, epsilon or none"},
      {"sweep_grid", default_grid_text(), "tolerances swept for the Pareto front"},
      {"candidate_record", "0", "use the predictors of this 1-based record as the candidate; 0 = none"},
      {"trials", "100", "benchmark trials"},
      {"n_records", "200", "records per synthetic benchmark dataset"},
      {"epsilon_fraction", "0.1", "benchmark terminal threshold as a fraction of the root H"},
      {"serve_addr", "127.0.0.1:8080", "host:port for serve; port 0 picks a free port"},
      {"journal", "", "session journal for serve; empty = <out>/journal.ndjson"},
      {"require_predictors", "false", "serve: reject sessions missing a predictor"},
  };
  return keys;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#' || t.front() == ';') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw RunConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    m[std::string(trim(t.substr(0, eq)))] = std::string(trim(t.substr(eq + 1)));
  }
  return m;
}

ConfigMap load_config_file(const fs::path& path) { return parse_config_text(read_text(path)); }

RunConfig resolve_config(Command command, const ConfigMap& file, const ConfigMap& flags) {
  RunConfig c;
  c.command = command;
  for (const auto& k : config_keys()) c.values[k.name] = k.default_value;
  auto known = [](const std::string& key) {
    if (key.rfind("candidate.", 0) == 0 && key.size() > 10) return true;
    for (const auto& k : config_keys())
      if (k.name == key) return true;
    return false;
  };
  for (const auto* layer : {&file, &flags})
    for (const auto& [k, v] : *layer) {
      if (!known(k)) throw RunConfigError("unknown config key: " + k);
      c.values[k] = v;
    }
  const bool plan_like = command == Command::plan || command == Command::validate || command == Command::scenario;
  if (c.values["ne"].empty()) c.values["ne"] = plan_like ? "50" : "20";
  if (c.values["iters"].empty())
    c.values["iters"] = plan_like ? "20000" : command == Command::benchmark ? "5000" : "2000";
  if (c.values["journal"].empty()) c.values["journal"] = (fs::path(c.values["out"]) / "journal.ndjson").string();

  const auto& v = c.values;
  auto get = [&](const std::string& k) { return v.at(k); };
  c.dataset = get("dataset");
  c.schema = get("schema");
  c.out = get("out");
  c.seed = to_u64("seed", get("seed"));

  auto& r = c.env.reward;
  const auto mode = get("mode");
  if (mode == "cost")
    r.mode = RewardMode::cost;
  else if (mode == "info" || mode == "info_per_cost")
    r.mode = RewardMode::info_per_cost;
  else
    throw RunConfigError("mode: expected cost or info");
  r.rho = to_list("rho", get("rho"));
  r.gamma = to_double("gamma", get("gamma"));
  r.penalty = to_double("penalty", get("penalty"));
  r.horizon = static_cast<int>(to_int("horizon", get("horizon")));
  r.epsilon = to_double("epsilon", get("epsilon"));
  r.tau = to_double("tau", get("tau"));
  const auto m = to_int("m", get("m"));
  if (m < 0) throw RunConfigError("m must be non-negative");
  c.env.max_batch = static_cast<std::size_t>(m);
  if (get("penalize_unmet_terminal") != "auto")
    r.penalize_unmet_terminal = to_bool("penalize_unmet_terminal", get("penalize_unmet_terminal"));
  c.env.kernel.lambda_w = to_double("lambda_w", get("lambda_w"));
  c.env.kernel.target_leak_guard = to_bool("target_leak_guard", get("target_leak_guard"));

  c.n_e = static_cast<int>(to_int("ne", get("ne")));
  auto& p = c.planner;
  p.n_itr = static_cast<int>(to_int("iters", get("iters")));
  p.c_ucb = to_double("c_ucb", get("c_ucb"));
  p.k_action = to_double("k_action", get("k_action"));
  p.alpha_action = to_double("alpha_action", get("alpha_action"));
  p.k_state = to_double("k_state", get("k_state"));
  p.alpha_state = to_double("alpha_state", get("alpha_state"));
  p.rollout_depth = static_cast<int>(to_int("rollout_depth", get("rollout_depth")));
  const auto threads = to_int("threads", get("threads"));
  if (threads < 0) throw RunConfigError("threads must be non-negative");
  c.threads = static_cast<unsigned>(threads);

  const auto adv = get("mlasp_advance");
  if (adv == "expected")
    c.advance = MlaspAdvance::expected;
  else if (adv == "sampled")
    c.advance = MlaspAdvance::sampled;
  else
    throw RunConfigError("mlasp_advance: expected or sampled");
  const auto sweep = get("sweep");
  if (sweep == "tau")
    c.sweep = SweepKind::tau;
  else if (sweep == "epsilon")
    c.sweep = SweepKind::epsilon;
  else if (sweep == "none")
    c.sweep.reset();
  else
    throw RunConfigError("sweep: expected tau, epsilon or none");
  c.sweep_grid = to_list("sweep_grid", get("sweep_grid"));
  if (c.sweep && c.sweep_grid.empty()) throw RunConfigError("sweep_grid is empty");

  for (const auto& [k, val] : v)
    if (k.rfind("candidate.", 0) == 0) c.candidate.emplace_back(k.substr(10), to_double(k, val));
  c.candidate_record = static_cast<std::size_t>(to_u64("candidate_record", get("candidate_record")));

  c.trials = static_cast<int>(to_int("trials", get("trials")));
  c.n_records = static_cast<std::size_t>(to_u64("n_records", get("n_records")));
  c.epsilon_fraction = to_double("epsilon_fraction", get("epsilon_fraction"));
  c.serve_addr = get("serve_addr");
  c.journal = get("journal");
  c.require_predictors = to_bool("require_predictors", get("require_predictors"));
  return c;
}

std::string format_effective_config(const RunConfig& c) {
  std::ostringstream out;
  out << "# effective configuration (" << to_string(c.command) << ")\n";
  out << "schema_version = " << kReportSchemaVersion << "\n";
  for (const auto& [k, v] : c.values) out << k << " = " << v << "\n";
  return out.str();
}

int cmd_validate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Dataset d;
  try {
    d = load_prepared(c);
  } catch (const RunConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const ZeroVarianceError& e) {
    out << "violations: 1\n  - zero-variance feature: " << e.feature() << "\n";
    return kInvalid;
  } catch (const DatasetError& e) {
    out << "violations: 1\n  - " << e.what() << "\n";
    return kInvalid;
  }
  const auto report = validate_dataset(d);
  out << "records: " << d.num_records() << "\n";
  out << "features: " << d.num_features() << "\n";
  out << "assays: " << d.num_assays() << "\n";
  out << "targets available: " << target_index_set(d).size() << "\n";
  out << "violations: " << report.violations.size() << "\n";
  for (const auto& v : report.violations) out << "  - " << v << "\n";
  out << "warnings: " << report.warnings.size() << "\n";
  for (const auto& w : report.warnings) out << "  - " << w << "\n";
  return report.ok() ? kOk : kInvalid;
}

int cmd_plan(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    const Dataset d = load_prepared(c);
    const auto ec = resolved_env(c, d);
    const Environment env(d, ec);
    env.check_config();
    check_params(c.planner);
    const auto root = candidate_of(c, d);
    const EnsembleConfig ens{c.n_e, c.seed, c.planner, c.threads};
    const auto policies = run_ensemble(env, root, ens);
    const auto m = build_mlasp(policies, env, root, {c.advance, c.seed});
    std::optional<ParetoResult> pareto;
    if (c.sweep) pareto = pareto_sweep(d, ec, root, ens, c.sweep_grid, *c.sweep, {c.advance, c.seed});

    try {
      fs::create_directories(c.out);
      write_text(c.out / "mlasp.json", mlasp_json(m, env).dump(2) + "\n");
      write_text(c.out / "votes.csv", votes_csv(m, env));
      if (pareto) write_text(c.out / "pareto.csv", pareto_csv(*pareto, env));
      write_text(c.out / "effective_config.ini", format_effective_config(c));
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kIoFailure;
    }

    const auto names = d.assay_names();
    out << "MLASP (" << c.n_e << " members, " << c.planner.n_itr << " iterations, tau " << format_double(ec.reward.tau)
        << ", epsilon " << format_double(ec.reward.epsilon) << ")\n";
    out << "  H " << format_double(m.initial_H) << "  L " << format_double(m.initial_L) << "\n";
    for (std::size_t t = 0; t < m.steps.size(); ++t) {
      const auto& s = m.steps[t];
      out << "  " << t + 1 << ". " << to_string(s.action, names) << "  votes " << format_double(s.vote_fraction)
          << "  spend " << format_double(s.cumulative_spend) << "  H " << format_double(s.H) << "  L "
          << format_double(s.L) << "\n";
    }
    out << "spend " << format_double(m.spend) << ", terminal H " << format_double(m.terminal_H)
        << (m.constraint_met ? ", constraint met" : ", constraint not met") << (m.truncated ? " (truncated)" : "")
        << (m.infeasible ? " (infeasible)" : "") << "\n";
    if (pareto) {
      out << "Pareto front (" << (pareto->kind == SweepKind::tau ? "tau" : "epsilon") << "):\n";
      for (const auto& p : pareto->front)
        out << "  " << format_double(p.tolerance) << "  spend " << format_double(p.spend) << "  first "
            << to_string(p.first_batch, names) << "\n";
    }
    out << "outputs written to " << c.out.string() << "\n";
    return kOk;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
}

int cmd_benchmark(const RunConfig& c, std::ostream& out, std::ostream& err) {
  AlignmentConfig ac;
  ac.n_trials = c.trials;
  ac.spec.n_records = c.n_records;
  ac.kernel = c.env.kernel;
  ac.ensemble = EnsembleConfig{c.n_e, 0, c.planner, 1};
  ac.master_seed = c.seed;
  ac.epsilon_fraction = c.epsilon_fraction;
  ac.penalty = c.env.reward.penalty;
  ac.threads = c.threads;
  AlignmentReport report;
  try {
    check_params(c.planner);
    if (c.n_e < 1) throw ConfigError("ensemble size must be at least 1");
    report = run_alignment_benchmark(ac, [&](const AlignmentRow& r) {
      err << "trial " << r.trial << ": theo " << to_string(Action::of(r.theo)) << ", top1 " << to_string(r.top1)
          << "\n";
    });
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
  try {
    fs::create_directories(c.out);
    write_text(c.out / "alignment.csv", alignment_csv(report));
    write_text(c.out / "summary.json", alignment_summary_json(report).dump(2) + "\n");
    write_text(c.out / "effective_config.ini", format_effective_config(c));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  }
  out << "trials " << report.rows.size() << "\n";
  out << "top-1 alignment " << format_double(report.t1_rate) << "\n";
  out << "top-2 alignment " << format_double(report.t2_rate) << "\n";
  out << "VI-Sim alignment " << format_double(report.sim_rate) << "\n";
  out << "outputs written to " << c.out.string() << "\n";
  return kOk;
}

int cmd_serve(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.dataset.empty() || c.schema.empty()) {
    err << "error: serve needs --dataset and --schema\n";
    return kInvalid;
  }
  Dataset d;
  try {
    d = load_prepared(c);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
  const auto colon = c.serve_addr.rfind(':');
  if (colon == std::string::npos) {
    err << "error: serve_addr must be host:port\n";
    return kInvalid;
  }
  const auto host = c.serve_addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(c.serve_addr.substr(colon + 1));
  } catch (const std::exception&) {
    err << "error: bad port in serve_addr\n";
    return kInvalid;
  }

  ServiceConfig sc;
  std::unique_ptr<SessionService> service;
  try {
    sc.env = resolved_env(c, d);
    sc.n_e = c.n_e;
    sc.n_itr = c.planner.n_itr;
    sc.planner = c.planner;
    sc.seed = c.seed;
    sc.threads = c.threads;
    sc.pareto_grid = c.sweep_grid.empty() ? default_sweep_grid() : c.sweep_grid;
    sc.advance = c.advance;
    sc.require_predictors = c.require_predictors;
    sc.journal = c.journal;
    check_params(c.planner);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
  try {
    if (sc.journal.has_parent_path()) fs::create_directories(sc.journal.parent_path());
    service = std::make_unique<SessionService>(d, sc);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  }

  // Signals are taken synchronously so the server can stop outside a handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  sigset_t previous;
  pthread_sigmask(SIG_BLOCK, &signals, &previous);

  httplib::Server server;
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  service->mount(server);
  const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    pthread_sigmask(SIG_SETMASK, &previous, nullptr);
    err << "error: cannot bind " << c.serve_addr << "\n";
    return kIoFailure;
  }
  try {
    write_text(c.out / "effective_config.ini", format_effective_config(c));
  } catch (const std::exception& e) {
    pthread_sigmask(SIG_SETMASK, &previous, nullptr);
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  }
  std::thread listener([&] { server.listen_after_bind(); });
  out << "listening on http://" << host << ":" << bound << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  listener.join();
  pthread_sigmask(SIG_SETMASK, &previous, nullptr);
  out << "stopped" << std::endl;
  return kOk;
}

int cmd_scenario(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    const CnsScenario sc;
    const auto d = generate_cns_dataset(sc);
    const auto csv = c.out / "cns_standin.csv";
    const auto schema = c.out / "cns_standin.schema";
    fs::create_directories(c.out);
    write_dataset(d, csv, schema);

    const auto reps = representative_cns_candidates(d, 4);
    std::ostringstream cand;
    cand << "name";
    for (const auto& [k, v] : reps.front().predictors) cand << ',' << k;
    cand << '\n';
    for (const auto& r : reps) {
      cand << r.name;
      for (const auto& [k, v] : r.predictors) cand << ',' << format_double(v);
      cand << '\n';
    }
    write_text(c.out / "cns_candidates.csv", cand.str());

    std::ostringstream ini;
    ini << "# stand-in brain-penetration scenario; costs in dollars\n"
        << "dataset = cns_standin.csv\nschema = cns_standin.schema\n"
        << "mode = cost\nrho = 1, 0\nm = 3\nepsilon = 0.1\ntau = 0.6\n";
    for (const auto& [k, v] : reps.front().predictors) ini << "candidate." << k << " = " << format_double(v) << "\n";
    write_text(c.out / "cns_plan.ini", ini.str());
    out << "wrote " << csv.string() << ", " << schema.string() << ", cns_candidates.csv and cns_plan.ini\n";
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Similarity-weighted ensemble MCTS assay planner"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  struct Flags {
    std::string config;
    std::map<std::string, std::string> values;
    std::vector<std::string> sets;
  };
  Flags flags;
  std::map<std::string, std::string> raw;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "INI-style config file");
    for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{{"--dataset", "dataset"},
                                                                                   {"--schema", "schema"},
                                                                                   {"--out", "out"},
                                                                                   {"--seed", "seed"},
                                                                                   {"--tau", "tau"},
                                                                                   {"--epsilon", "epsilon"},
                                                                                   {"--ne", "ne"},
                                                                                   {"--iters", "iters"},
                                                                                   {"--m", "m"},
                                                                                   {"--threads", "threads"},
                                                                                   {"--serve-addr", "serve_addr"}})
      sub->add_option(flag, raw[key], "overrides config key '" + key + "'");
    sub->add_option("--set", flags.sets, "any config key as key=value (repeatable)");
  };
  std::map<CLI::App*, Command> subs;
  for (const auto& [name, cmd, help] :
       std::vector<std::tuple<std::string, Command, std::string>>{
           {"validate", Command::validate, "load a dataset and report invariant violations"},
           {"plan", Command::plan, "ensemble planning: MLASP, votes and Pareto sweep"},
           {"benchmark", Command::benchmark, "synthetic alignment benchmark against exact baselines"},
           {"serve", Command::serve, "serve the session HTTP API"},
           {"scenario", Command::scenario, "write the bundled stand-in scenario files"}}) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    subs[sub] = cmd;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInvalid;
  }

  Command command = Command::plan;
  CLI::App* chosen = nullptr;
  for (const auto& [sub, cmd] : subs)
    if (sub->parsed()) {
      command = cmd;
      chosen = sub;
    }

  ConfigMap flag_map;
  for (const auto& [key, value] : raw) {
    const std::string flag = "--" + (key == "serve_addr" ? std::string("serve-addr") : key);
    if (chosen->count(flag) > 0) flag_map[key] = value;
  }
  for (const auto& s : flags.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --set expects key=value\n";
      return kInvalid;
    }
    flag_map[std::string(trim(s.substr(0, eq)))] = std::string(trim(s.substr(eq + 1)));
  }

  RunConfig config;
  try {
    ConfigMap file;
    if (!flags.config.empty()) {
      try {
        file = load_config_file(flags.config);
      } catch (const std::ios_base::failure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoFailure;
      }
      // Relative paths in a config file resolve against the file's directory.
      const auto base = fs::path(flags.config).parent_path();
      for (const char* key : {"dataset", "schema"})
        if (auto it = file.find(key); it != file.end() && !it->second.empty() && fs::path(it->second).is_relative())
          it->second = (base / it->second).lexically_normal().string();
    }
    config = resolve_config(command, file, flag_map);
  } catch (const RunConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }

  switch (command) {
    case Command::validate: return cmd_validate(config, std::cout, std::cerr);
    case Command::plan: return cmd_plan(config, std::cout, std::cerr);
    case Command::benchmark: return cmd_benchmark(config, std::cout, std::cerr);
    case Command::serve: return cmd_serve(config, std::cout, std::cerr);
    case Command::scenario: return cmd_scenario(config, std::cout, std::cerr);
  }
  return kInvalid;
}

}  // namespace assayplan
