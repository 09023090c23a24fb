#include "assayplan/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

namespace assayplan {

namespace {

double phi_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Draw from N(0,1) restricted to [a, b] with a >= 0 (the right tail side).
double positive_tail(double a, double b, Rng& rng, std::size_t max_tries) {
  const double w = b - a;
  const bool uniform = std::isfinite(b) && w * (a + w / 2.0) <= 1.0;
  const double alpha = (a + std::sqrt(a * a + 4.0)) / 2.0;
  for (std::size_t i = 0; i < max_tries; ++i) {
    if (uniform) {
      const double x = a + w * uniform01(rng);
      if (uniform01(rng) <= std::exp((a * a - x * x) / 2.0)) return x;
    } else {
      const double x = a - std::log1p(-uniform01(rng)) / alpha;
      if (x > b) continue;
      const double r = x - alpha;
      if (uniform01(rng) <= std::exp(-r * r / 2.0)) return x;
    }
  }
  throw SamplingError("truncated normal sampler exceeded its iteration cap");
}

}  // namespace

double sample_standard_normal(Rng& rng) {
  while (true) {
    const double u = 2.0 * uniform01(rng) - 1.0;
    const double v = 2.0 * uniform01(rng) - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

double sample_truncated_normal(double mu, double sigma, double lo, double hi, Rng& rng, std::size_t max_tries) {
  if (!(sigma > 0.0)) throw SamplingError("truncated normal needs sigma > 0");
  if (!(lo < hi)) throw SamplingError("truncated normal needs lo < hi");
  const double a = (lo - mu) / sigma;
  const double b = (hi - mu) / sigma;
  const double mass = phi_cdf(b) - phi_cdf(a);
  double z = 0.0;
  if (mass >= 0.1) {
    std::size_t i = 0;
    for (; i < max_tries; ++i) {
      z = sample_standard_normal(rng);
      if (z >= a && z <= b) break;
    }
    if (i == max_tries) throw SamplingError("truncated normal sampler exceeded its iteration cap");
  } else if (a >= 0.0) {
    z = positive_tail(a, b, rng, max_tries);
  } else if (b <= 0.0) {
    z = -positive_tail(-b, -a, rng, max_tries);
  } else {
    // Narrow interval around the mode: uniform proposal.
    std::size_t i = 0;
    for (; i < max_tries; ++i) {
      z = a + (b - a) * uniform01(rng);
      if (uniform01(rng) <= std::exp(-z * z / 2.0)) break;
    }
    if (i == max_tries) throw SamplingError("truncated normal sampler exceeded its iteration cap");
  }
  return std::clamp(mu + sigma * z, lo, hi);
}

double truncated_normal_cdf(double x, double mu, double sigma, double lo, double hi) {
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  const double fa = phi_cdf((lo - mu) / sigma);
  const double fb = phi_cdf((hi - mu) / sigma);
  return (phi_cdf((x - mu) / sigma) - fa) / (fb - fa);
}

SyntheticSpec SyntheticSpec::benchmark() {
  SyntheticSpec s;
  s.n_records = 200;
  for (int a = 1; a <= 6; ++a) {
    const double mu = 50.0 * a / 6.0;
    s.assays.push_back({mu, 0.3 * mu, 0.0, 2.0 * mu});
  }
  s.beta = {0.3, 0.25, 0.2, 0.15, 0.07, 0.03};
  s.noise = {0.0, 5.0, -10.0, 10.0};
  s.costs = {1.0, 1.2, 1.5, 1.8, 2.0, 2.2};
  s.gamma = 0.95;
  return s;
}

void check_spec(const SyntheticSpec& spec) {
  const auto m = spec.num_assays();
  if (m == 0 || m > 20) throw ConfigError("synthetic generator needs between 1 and 20 assays");
  if (spec.n_records < 2) throw ConfigError("synthetic generator needs at least two records");
  if (spec.beta.size() != m || spec.costs.size() != m) throw ConfigError("beta and costs must have one entry per assay");
  for (const auto& t : spec.assays)
    if (!(t.sigma > 0.0) || !(t.lo < t.hi)) throw ConfigError("assay distributions need sigma > 0 and lo < hi");
  if (!(spec.noise.sigma > 0.0) || !(spec.noise.lo < spec.noise.hi)) throw ConfigError("invalid noise distribution");
  for (double c : spec.costs)
    if (!(c > 0.0)) throw ConfigError("synthetic costs must be positive");
  if (!(spec.gamma >= 0.0 && spec.gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
}

SyntheticSample sample_record(const SyntheticSpec& spec, Rng& rng) {
  SyntheticSample s;
  for (const auto& t : spec.assays) s.y.push_back(sample_truncated_normal(t.mu, t.sigma, t.lo, t.hi, rng));
  s.noise = sample_truncated_normal(spec.noise.mu, spec.noise.sigma, spec.noise.lo, spec.noise.hi, rng);
  s.g = s.noise;
  for (std::size_t k = 0; k < s.y.size(); ++k) s.g += spec.beta[k] * s.y[k];
  return s;
}

SyntheticData generate_dataset(const SyntheticSpec& spec, Rng& rng) {
  check_spec(spec);
  const std::size_t m = spec.num_assays();
  const std::size_t n = spec.n_records;
  Dataset d;
  d.cost_components = {"cost"};
  d.target_name = "g";
  for (std::size_t k = 0; k < m; ++k) {
    d.features.push_back({"y" + std::to_string(k + 1), FeatureKind::assay_outcome, 1.0, 0.0, 0.0});
    d.assays.push_back({"A" + std::to_string(k + 1), k, {spec.costs[k]}});
  }
  // Column-wise draws: every assay column first, then the noise column.
  std::vector<std::vector<double>> cols(m, std::vector<double>(n));
  for (std::size_t k = 0; k < m; ++k) {
    const auto& t = spec.assays[k];
    for (std::size_t i = 0; i < n; ++i) cols[k][i] = sample_truncated_normal(t.mu, t.sigma, t.lo, t.hi, rng);
  }
  SyntheticData out;
  out.noise.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.noise[i] = sample_truncated_normal(spec.noise.mu, spec.noise.sigma, spec.noise.lo, spec.noise.hi, rng);
  d.values.resize(n * m);
  d.targets.resize(n);
  d.record_ids.resize(n);
  double gmin = std::numeric_limits<double>::infinity(), gmax = -gmin;
  for (std::size_t i = 0; i < n; ++i) {
    double g = out.noise[i];
    for (std::size_t k = 0; k < m; ++k) {
      d.values[i * m + k] = cols[k][i];
      g += spec.beta[k] * cols[k][i];
    }
    d.targets[i] = g;
    d.record_ids[i] = std::to_string(i + 1);
    gmin = std::min(gmin, g);
    gmax = std::max(gmax, g);
  }
  d.g_min = gmin;
  d.g_max = gmax;
  out.dataset = compute_feature_stats(std::move(d));
  return out;
}

EmpiricalMoments empirical_moments(const SyntheticData& data) {
  EmpiricalMoments m;
  for (const auto& f : data.dataset.features) m.var_y.push_back(f.sigma2);
  const double n = static_cast<double>(data.noise.size());
  double mean = 0.0;
  for (double e : data.noise) mean += e;
  mean /= n;
  for (double e : data.noise) m.var_noise += (e - mean) * (e - mean);
  m.var_noise /= n;
  return m;
}

double exact_conditional_variance(const SyntheticSpec& spec, const EmpiricalMoments& m, AssaySet measured) {
  double v = m.var_noise;
  for (std::size_t k = 0; k < spec.num_assays(); ++k)
    if (!contains(measured, k)) v += spec.beta[k] * spec.beta[k] * m.var_y[k];
  return v;
}

double batch_cost(const SyntheticSpec& spec, AssaySet a) {
  double c = 0.0;
  for (auto k : members(a)) c += spec.costs[k];
  return c;
}

SubsetPolicy subset_value_iteration(std::size_t num_assays, const SubsetReward& reward,
                                    const std::vector<double>& costs, double gamma, double tolerance,
                                    int max_iterations) {
  if (num_assays == 0 || num_assays > 20) throw ConfigError("subset value iteration supports 1 to 20 assays");
  const AssaySet full = full_set(num_assays);
  const std::size_t states = std::size_t{1} << num_assays;
  auto cost_of = [&](AssaySet a) {
    double c = 0.0;
    for (auto k : members(a)) c += costs[k];
    return c;
  };
  // Rewards do not change between sweeps; tabulate them once per (state, batch).
  std::vector<std::vector<std::pair<AssaySet, double>>> table(states);
  for (AssaySet s = 0; s < full; ++s) {
    const AssaySet comp = full & ~s;
    for (AssaySet a = comp; a != 0; a = (a - 1) & comp) table[s].emplace_back(a, reward(s, a));
  }
  SubsetPolicy p;
  p.num_assays = num_assays;
  p.value.assign(states, 0.0);
  p.action.assign(states, 0);
  for (int it = 1; it <= max_iterations; ++it) {
    std::vector<double> next(states, 0.0);
    double delta = 0.0;
    for (AssaySet s = 0; s < full; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      AssaySet best_a = 0;
      for (const auto& [a, r] : table[s]) {
        const double q = r + gamma * p.value[s | a];
        bool better = q > best;
        if (q == best) {
          const double ca = cost_of(a), cb = cost_of(best_a);
          better = ca < cb || (ca == cb && canonical_less(Action::of(a), Action::of(best_a)));
        }
        if (better) {
          best = q;
          best_a = a;
        }
      }
      next[s] = best;
      p.action[s] = best_a;
      delta = std::max(delta, std::abs(best - p.value[s]));
    }
    p.value = std::move(next);
    p.iterations = it;
    p.residual = delta;
    if (delta < tolerance) break;
  }
  return p;
}

double theo_reward(const SyntheticSpec& spec, const EmpiricalMoments& m, AssaySet batch) {
  double reduction = 0.0;
  for (auto k : members(batch)) reduction += spec.beta[k] * spec.beta[k] * m.var_y[k];
  return reduction / batch_cost(spec, batch);
}

SubsetPolicy vi_theo(const SyntheticSpec& spec, const EmpiricalMoments& m) {
  check_spec(spec);
  return subset_value_iteration(
      spec.num_assays(), [&](AssaySet, AssaySet a) { return theo_reward(spec, m, a); }, spec.costs, spec.gamma);
}

double sim_conditional_variance(const Dataset& d, const std::vector<double>& candidate_y, AssaySet measured,
                                const KernelConfig& kernel) {
  auto s = CandidateState::empty(d);
  for (auto j : members(measured)) s.known[d.assays[j].outcome_feature] = candidate_y[j];
  s.measured = measured;
  const auto w = compute_weights(s, d, kernel);
  return evaluate(s, w, TargetView(d)).H;
}

SubsetPolicy vi_sim(const Dataset& d, const std::vector<double>& candidate_y, const SyntheticSpec& spec,
                    const KernelConfig& kernel) {
  check_spec(spec);
  const std::size_t m = spec.num_assays();
  std::vector<double> h(std::size_t{1} << m);
  for (AssaySet s = 0; s < h.size(); ++s) h[s] = sim_conditional_variance(d, candidate_y, s, kernel);
  return subset_value_iteration(
      m, [&](AssaySet s, AssaySet a) { return (h[s] - h[s | a]) / batch_cost(spec, a); }, spec.costs, spec.gamma);
}

std::uint64_t trial_seed(std::uint64_t master_seed, int trial) { return master_seed + static_cast<std::uint64_t>(trial); }

std::uint64_t trial_ensemble_seed(std::uint64_t master_seed, int trial) {
  return splitmix64(trial_seed(master_seed, trial)) >> 16;
}

EnvConfig benchmark_env_config(const AlignmentConfig& config, const Dataset& d) {
  EnvConfig ec;
  ec.kernel = config.kernel;
  ec.reward.mode = RewardMode::info_per_cost;
  ec.reward.rho = {1.0};
  ec.reward.gamma = config.spec.gamma;
  ec.reward.penalty = config.penalty;
  ec.reward.horizon = static_cast<int>(config.spec.num_assays());
  ec.reward.tau = 0.0;
  ec.max_batch = config.spec.num_assays();
  const auto root = CandidateState::empty(d);
  const auto h0 = evaluate(root, compute_weights(root, d, config.kernel), TargetView(d)).H;
  ec.reward.epsilon = config.epsilon_fraction * h0;
  return ec;
}

bool covers(AssaySet theo, Action batch) { return (theo & ~batch.batch) == 0; }

bool covers(AssaySet theo, const std::vector<Action>& batches) {
  AssaySet u = 0;
  for (auto a : batches) u |= a.batch;
  return (theo & ~u) == 0;
}

AlignmentRow run_alignment_trial(const AlignmentConfig& config, int trial) {
  Rng rng(trial_seed(config.master_seed, trial));
  const auto data = generate_dataset(config.spec, rng);
  const auto candidate = sample_record(config.spec, rng);
  const auto& d = data.dataset;

  AlignmentRow row;
  row.trial = trial;
  row.theo = vi_theo(config.spec, empirical_moments(data)).first_action();
  row.sim = vi_sim(d, candidate.y, config.spec, config.kernel).first_action();
  row.sim_match = row.sim == row.theo;

  Environment env(d, benchmark_env_config(config, d));
  env.check_config();
  const auto root = CandidateState::empty(d);
  row.initial_H = env.evaluate(root).f.H;
  EnsembleConfig ec = config.ensemble;
  ec.base_seed = trial_ensemble_seed(config.master_seed, trial);
  const auto policies = run_ensemble(env, root, ec);
  row.votes = vote_actions(policies, key_of(env, root));
  row.top2 = top_k_actions(row.votes, 2, env);
  row.top1 = row.top2.empty() ? Action::eox() : row.top2.front();
  row.t1 = covers(row.theo, row.top1);
  row.t2 = covers(row.theo, row.top2);
  return row;
}

AlignmentReport run_alignment_benchmark(const AlignmentConfig& config,
                                        const std::function<void(const AlignmentRow&)>& progress) {
  if (config.n_trials < 1) throw ConfigError("empty protocol: n_trials must be at least 1");
  check_spec(config.spec);
  AlignmentReport report;
  report.rows.resize(static_cast<std::size_t>(config.n_trials));
  std::mutex progress_mutex;
  parallel_for(
      report.rows.size(),
      [&](std::size_t i) {
        report.rows[i] = run_alignment_trial(config, static_cast<int>(i) + 1);
        if (progress) {
          std::lock_guard lock(progress_mutex);
          progress(report.rows[i]);
        }
      },
      config.threads);
  int t1 = 0, t2 = 0, sim = 0;
  for (const auto& r : report.rows) {
    t1 += r.t1;
    t2 += r.t2;
    sim += r.sim_match;
  }
  const double n = static_cast<double>(report.rows.size());
  report.t1_rate = t1 / n;
  report.t2_rate = t2 / n;
  report.sim_rate = sim / n;
  return report;
}

}  // namespace assayplan
