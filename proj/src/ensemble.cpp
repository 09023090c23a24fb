#include "assayplan/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace assayplan {

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads) {
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<Policy> run_ensemble(const Environment& env, const CandidateState& root, const EnsembleConfig& config) {
  if (config.n_e < 1) throw ConfigError("ensemble size must be at least 1");
  check_params(config.planner);
  std::vector<Policy> out(static_cast<std::size_t>(config.n_e));
  parallel_for(
      out.size(),
      [&](std::size_t i) {
        PlannerParams p = config.planner;
        p.seed = config.base_seed + i + 1;
        out[i] = plan(env, root, p).policy;
      },
      config.threads);
  return out;
}

int VoteHistogram::total() const {
  int t = 0;
  for (const auto& [a, c] : counts) t += c;
  return t;
}

VoteHistogram vote_actions(const std::vector<Policy>& policies, const StateKey& prefix) {
  VoteHistogram h;
  for (const auto& p : policies) {
    if (auto a = p.at(prefix))
      h.counts[*a] += 1;
    else
      h.abstentions += 1;
  }
  return h;
}

std::vector<Action> top_k_actions(const VoteHistogram& histogram, std::size_t k, const Environment& env) {
  if (k < 1) throw ConfigError("k must be at least 1");
  std::vector<std::pair<Action, int>> entries(histogram.counts.begin(), histogram.counts.end());
  std::stable_sort(entries.begin(), entries.end(), [&](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    const double cx = env.scalarized_cost(x.first), cy = env.scalarized_cost(y.first);
    if (cx != cy) return cx < cy;
    return canonical_less(x.first, y.first);
  });
  std::vector<Action> out;
  for (std::size_t i = 0; i < entries.size() && i < k; ++i) out.push_back(entries[i].first);
  return out;
}

namespace {

// Record whose batch outcomes lie nearest (variance-normalized) to the
// weight-expected outcome vector; lowest index on ties.
std::size_t expected_record(const Environment& env, Action a, const BeliefWeights& w) {
  const auto& d = env.dataset();
  std::vector<std::size_t> feats;
  for (auto j : members(a.batch)) feats.push_back(d.assays[j].outcome_feature);
  std::vector<double> mean(feats.size(), 0.0);
  for (std::size_t i = 0; i < d.num_records(); ++i)
    for (std::size_t f = 0; f < feats.size(); ++f) mean[f] += w.normalized[i] * d.value(i, feats[f]);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d.num_records(); ++i) {
    double dist = 0.0;
    for (std::size_t f = 0; f < feats.size(); ++f) {
      const double r = d.value(i, feats[f]) - mean[f];
      dist += r * r / d.features[feats[f]].sigma2;
    }
    if (dist < best_d) {
      best_d = dist;
      best = i;
    }
  }
  return best;
}

}  // namespace

Mlasp build_mlasp(const std::vector<Policy>& policies, const Environment& env, const CandidateState& root,
                  const MlaspOptions& options) {
  if (policies.empty()) throw ConfigError("MLASP needs at least one policy");
  const auto& rw = env.reward();
  Rng rng(options.seed);
  Mlasp m;
  CandidateState s = root;
  Belief b = env.evaluate(root);
  m.initial_H = b.f.H;
  m.initial_L = b.f.L;
  m.cost.assign(env.dataset().cost_components.size(), 0.0);
  m.infeasible = !env.is_feasible(b.f.L);
  const int max_steps = env.horizon() + 1;
  for (int guard = 0; guard < max_steps; ++guard) {
    if (!m.steps.empty() && env.is_terminal(s, b.f.H)) break;
    MlaspStep step;
    step.votes = vote_actions(policies, key_of(env, s));
    if (step.votes.counts.empty()) {
      m.truncated = true;
      break;
    }
    step.action = top_k_actions(step.votes, 1, env).front();
    step.vote_fraction = static_cast<double>(step.votes.counts.at(step.action)) / static_cast<double>(policies.size());
    if (!step.action.is_eox()) {
      const std::size_t r = options.advance == MlaspAdvance::expected ? expected_record(env, step.action, b.weights)
                                                                      : env.sample_record(b.weights, rng);
      const auto c = env.cost_vector(step.action);
      for (std::size_t q = 0; q < c.size(); ++q) m.cost[q] += c[q];
      m.spend += env.scalarized_cost(step.action);
      s = env.apply(s, step.action, r);
      env.advance_in_place(b, step.action, r, s);
      step.record = r;
    } else {
      s.ended = true;
    }
    step.cumulative_cost = m.cost;
    step.cumulative_spend = m.spend;
    step.H = b.f.H;
    step.L = b.f.L;
    step.g_mean = b.f.g_mean;
    m.steps.push_back(std::move(step));
    if (!env.is_feasible(b.f.L)) {
      m.infeasible = true;
      break;
    }
    if (s.ended) break;
  }
  m.terminal_H = b.f.H;
  m.constraint_met = !m.truncated && !m.infeasible && b.f.H <= rw.epsilon;
  return m;
}

std::vector<double> default_sweep_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

ParetoResult pareto_front(SweepKind kind, std::vector<ParetoPoint> points) {
  auto strictness = [kind](const ParetoPoint& p) { return kind == SweepKind::tau ? p.tolerance : -p.tolerance; };
  for (auto& p : points) {
    p.dominated = false;
    for (const auto& q : points) {
      const bool no_worse = q.spend <= p.spend && strictness(q) >= strictness(p);
      const bool better = q.spend < p.spend || strictness(q) > strictness(p);
      if (no_worse && better) {
        p.dominated = true;
        break;
      }
    }
  }
  ParetoResult r;
  r.kind = kind;
  for (const auto& p : points)
    if (!p.dominated) r.front.push_back(p);
  std::stable_sort(r.front.begin(), r.front.end(),
                   [](const ParetoPoint& x, const ParetoPoint& y) { return x.spend < y.spend; });
  r.front.erase(std::unique(r.front.begin(), r.front.end(),
                            [](const ParetoPoint& x, const ParetoPoint& y) { return x.spend == y.spend; }),
                r.front.end());
  r.points = std::move(points);
  return r;
}

ParetoResult pareto_sweep(const Dataset& dataset, const EnvConfig& env_config, const CandidateState& root,
                          const EnsembleConfig& config, const std::vector<double>& grid, SweepKind kind,
                          const MlaspOptions& options) {
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  std::vector<ParetoPoint> points;
  for (double t : grid) {
    EnvConfig ec = env_config;
    if (kind == SweepKind::tau)
      ec.reward.tau = t;
    else
      ec.reward.epsilon = t;
    Environment env(dataset, ec);
    env.check_config();
    const auto policies = run_ensemble(env, root, config);
    const auto m = build_mlasp(policies, env, root, options);
    points.push_back({t, m.spend, m.first_action(), m.terminal_H, m.constraint_met, false});
  }
  return pareto_front(kind, std::move(points));
}

}  // namespace assayplan
