#include "assayplan/reports.hpp"

#include <sstream>

#include "text_util.hpp"

namespace assayplan {

using nlohmann::json;
using detail::format_double;

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace {

json votes_object(const VoteHistogram& h, const Environment& env) {
  const auto names = env.dataset().assay_names();
  json v = json::array();
  for (const auto& a : top_k_actions(h, h.counts.size() + 1, env))
    v.push_back({{"action", to_string(a, names)}, {"votes", h.counts.at(a)}});
  return v;
}

json cost_object(const std::vector<double>& cost, const Environment& env) {
  json c = json::object();
  const auto& comps = env.dataset().cost_components;
  for (std::size_t q = 0; q < comps.size() && q < cost.size(); ++q) c[comps[q]] = cost[q];
  return c;
}

std::string action_label(Action a, const Environment& env) { return to_string(a, env.dataset().assay_names()); }

}  // namespace

json mlasp_json(const Mlasp& m, const Environment& env) {
  const auto& d = env.dataset();
  json steps = json::array();
  for (std::size_t t = 0; t < m.steps.size(); ++t) {
    const auto& s = m.steps[t];
    json j{{"step", t + 1},
           {"action", action_label(s.action, env)},
           {"assays", json::array()},
           {"vote_fraction", s.vote_fraction},
           {"votes", votes_object(s.votes, env)},
           {"abstentions", s.votes.abstentions},
           {"cumulative_cost", cost_object(s.cumulative_cost, env)},
           {"cumulative_spend", s.cumulative_spend},
           {"H", s.H},
           {"L", s.L},
           {"g_mean", s.g_mean}};
    for (auto k : members(s.action.batch)) j["assays"].push_back(d.assays[k].name);
    if (s.record) {
      j["followed_record"] = *s.record + 1;
      j["followed_record_id"] = d.record_ids[*s.record];
    }
    steps.push_back(std::move(j));
  }
  return json{{"schema_version", kReportSchemaVersion},
              {"initial_H", m.initial_H},
              {"initial_L", m.initial_L},
              {"epsilon", env.reward().epsilon},
              {"tau", env.reward().tau},
              {"steps", std::move(steps)},
              {"spend", m.spend},
              {"cost", cost_object(m.cost, env)},
              {"terminal_H", m.terminal_H},
              {"constraint_met", m.constraint_met},
              {"truncated", m.truncated},
              {"infeasible", m.infeasible}};
}

std::string votes_csv(const Mlasp& m, const Environment& env) {
  std::ostringstream out;
  out << "schema_version,step,action,votes,fraction,abstentions\n";
  for (std::size_t t = 0; t < m.steps.size(); ++t) {
    const auto& h = m.steps[t].votes;
    const double n = static_cast<double>(h.total() + h.abstentions);
    for (const auto& a : top_k_actions(h, h.counts.size() + 1, env))
      out << kReportSchemaVersion << ',' << t + 1 << ',' << csv_field(action_label(a, env)) << ',' << h.counts.at(a)
          << ',' << format_double(h.counts.at(a) / n) << ',' << h.abstentions << '\n';
  }
  return out.str();
}

std::string votes_csv(const VoteHistogram& h, const Environment& env) {
  Mlasp m;
  m.steps.push_back({});
  m.steps.back().votes = h;
  return votes_csv(m, env);
}

std::string pareto_csv(const ParetoResult& r, const Environment& env) {
  std::ostringstream out;
  out << "schema_version," << (r.kind == SweepKind::tau ? "tau" : "epsilon")
      << ",spend,first_batch,terminal_H,constraint_met,dominated,on_front\n";
  for (const auto& p : r.points) {
    bool on_front = false;
    for (const auto& f : r.front) on_front = on_front || (f.tolerance == p.tolerance && f.spend == p.spend);
    out << kReportSchemaVersion << ',' << format_double(p.tolerance) << ',' << format_double(p.spend) << ','
        << csv_field(action_label(p.first_batch, env)) << ',' << format_double(p.terminal_H) << ','
        << (p.constraint_met ? 1 : 0) << ',' << (p.dominated ? 1 : 0) << ',' << (on_front ? 1 : 0) << '\n';
  }
  return out.str();
}

json pareto_json(const ParetoResult& r, const Environment& env) {
  auto point = [&](const ParetoPoint& p) {
    return json{{"tolerance", p.tolerance},     {"spend", p.spend},
                {"first_batch", action_label(p.first_batch, env)},
                {"terminal_H", p.terminal_H},   {"constraint_met", p.constraint_met},
                {"dominated", p.dominated}};
  };
  json pts = json::array(), front = json::array();
  for (const auto& p : r.points) pts.push_back(point(p));
  for (const auto& p : r.front) front.push_back(point(p));
  return json{{"schema_version", kReportSchemaVersion}, {"sweep", r.kind == SweepKind::tau ? "tau" : "epsilon"}, {"points", pts}, {"front", front}};
}

std::string alignment_csv(const AlignmentReport& report) {
  std::ostringstream out;
  out << "schema_version,trial,vi_theo,ibmdp_top1,t1_match,ibmdp_top2,t2_match,vi_sim,sim_match,initial_H\n";
  for (const auto& r : report.rows) {
    std::string top2;
    for (std::size_t i = 0; i < r.top2.size(); ++i) top2 += (i ? ";" : "") + to_string(r.top2[i]);
    out << kReportSchemaVersion << ',' << r.trial << ',' << csv_field(to_string(Action::of(r.theo))) << ','
        << csv_field(to_string(r.top1)) << ',' << r.t1 << ',' << csv_field(top2) << ',' << r.t2 << ','
        << csv_field(to_string(Action::of(r.sim))) << ',' << r.sim_match << ',' << format_double(r.initial_H) << '\n';
  }
  return out.str();
}

json alignment_summary_json(const AlignmentReport& report) {
  int t1 = 0, t2 = 0, sim = 0;
  for (const auto& r : report.rows) {
    t1 += r.t1;
    t2 += r.t2;
    sim += r.sim_match;
  }
  return json{{"schema_version", kReportSchemaVersion},
              {"n_trials", report.rows.size()},
              {"top1_matches", t1},
              {"top2_matches", t2},
              {"vi_sim_matches", sim},
              {"top1_rate", report.t1_rate},
              {"top2_rate", report.t2_rate},
              {"vi_sim_rate", report.sim_rate}};
}

}  // namespace assayplan
