#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "assayplan/ensemble.hpp"

namespace assayplan {

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Standard normal variate (Marsaglia polar method on uniform01).
double sample_standard_normal(Rng& rng);

/// Normal(mu, sigma) restricted to [lo, hi]. Plain rejection when the
/// interval holds at least 10% of the mass; otherwise a uniform or
/// exponential (Robert) proposal. Throws SamplingError after max_tries.
double sample_truncated_normal(double mu, double sigma, double lo, double hi, Rng& rng,
                               std::size_t max_tries = 1000000);

/// CDF of the truncated normal, for goodness-of-fit checks.
double truncated_normal_cdf(double x, double mu, double sigma, double lo, double hi);

struct TruncatedNormal {
  double mu = 0.0;
  double sigma = 1.0;
  double lo = -1.0;
  double hi = 1.0;
};

struct SyntheticSpec {
  std::size_t n_records = 200;
  std::vector<TruncatedNormal> assays;
  std::vector<double> beta;
  TruncatedNormal noise{0.0, 5.0, -10.0, 10.0};
  std::vector<double> costs;
  std::optional<double> target_cost;
  double gamma = 0.95;

  std::size_t num_assays() const { return assays.size(); }

  /// M = 6, N = 200, mu_a = 50a/6, sigma_a = 0.3 mu_a on (0, 2 mu_a),
  /// beta = (0.3, 0.25, 0.2, 0.15, 0.07, 0.03), noise TN(0, 5; -10, 10),
  /// costs (1.0, 1.2, 1.5, 1.8, 2.0, 2.2), gamma = 0.95.
  static SyntheticSpec benchmark();
};

void check_spec(const SyntheticSpec& spec);

struct SyntheticSample {
  std::vector<double> y;  // one value per assay
  double noise = 0.0;
  double g = 0.0;
};

struct SyntheticData {
  /// Features y1..yM (assay outcomes), assays A1..AM with their costs, and
  /// target g. Statistics computed.
  Dataset dataset;
  std::vector<double> noise;  // per record
};

SyntheticSample sample_record(const SyntheticSpec& spec, Rng& rng);
SyntheticData generate_dataset(const SyntheticSpec& spec, Rng& rng);

/// Population variances of each assay column and of the noise draws.
struct EmpiricalMoments {
  std::vector<double> var_y;
  double var_noise = 0.0;
};

EmpiricalMoments empirical_moments(const SyntheticData& data);

/// sum_{k not in M} beta_k^2 var_k + var_noise.
double exact_conditional_variance(const SyntheticSpec& spec, const EmpiricalMoments& m, AssaySet measured);

/// Batch cost c_a = sum of per-assay costs.
double batch_cost(const SyntheticSpec& spec, AssaySet a);

/// Optimal action and value per measured-set bitmask.
struct SubsetPolicy {
  std::size_t num_assays = 0;
  std::vector<double> value;      // V(M), indexed by bitmask
  std::vector<AssaySet> action;   // 0 for the full set (no action left)
  int iterations = 0;
  double residual = 0.0;          // final sup-norm change

  AssaySet first_action() const { return action.empty() ? 0 : action.front(); }
};

using SubsetReward = std::function<double(AssaySet measured, AssaySet batch)>;

/// V(M) = max over nonempty batches of the complement of R(M, a) + gamma V(M u a),
/// V(full) = 0; iterated to sup-norm `tolerance` or `max_iterations`. Ties
/// go to the cheaper batch, then canonical order.
SubsetPolicy subset_value_iteration(std::size_t num_assays, const SubsetReward& reward,
                                    const std::vector<double>& costs, double gamma, double tolerance = 1e-6,
                                    int max_iterations = 1000);

/// Reward sum_{k in a} beta_k^2 var_k / c_a.
double theo_reward(const SyntheticSpec& spec, const EmpiricalMoments& m, AssaySet batch);
SubsetPolicy vi_theo(const SyntheticSpec& spec, const EmpiricalMoments& m);

/// Weighted target variance with the candidate's true values known for the
/// assays in `measured` (and nothing else).
double sim_conditional_variance(const Dataset& d, const std::vector<double>& candidate_y, AssaySet measured,
                                const KernelConfig& kernel);
SubsetPolicy vi_sim(const Dataset& d, const std::vector<double>& candidate_y, const SyntheticSpec& spec,
                    const KernelConfig& kernel);

struct AlignmentConfig {
  int n_trials = 100;
  SyntheticSpec spec = SyntheticSpec::benchmark();
  KernelConfig kernel;
  EnsembleConfig ensemble{20, 0, PlannerParams{5000}, 1};
  std::uint64_t master_seed = 2024;
  /// Terminal threshold as a fraction of the root uncertainty.
  double epsilon_fraction = 0.10;
  double penalty = -1e6;
  unsigned threads = 0;  // trials in parallel
};

struct AlignmentRow {
  int trial = 0;  // 1-based
  AssaySet theo = 0;
  Action top1;
  bool t1 = false;
  std::vector<Action> top2;
  bool t2 = false;
  AssaySet sim = 0;
  bool sim_match = false;
  double initial_H = 0.0;
  VoteHistogram votes;
};

struct AlignmentReport {
  std::vector<AlignmentRow> rows;
  double t1_rate = 0.0;
  double t2_rate = 0.0;
  double sim_rate = 0.0;
};

/// Seed of trial t's data and the base seed of its ensemble.
std::uint64_t trial_seed(std::uint64_t master_seed, int trial);
std::uint64_t trial_ensemble_seed(std::uint64_t master_seed, int trial);

/// Environment settings the benchmark uses for IBMDP on one trial.
EnvConfig benchmark_env_config(const AlignmentConfig& config, const Dataset& d);

AlignmentRow run_alignment_trial(const AlignmentConfig& config, int trial);
AlignmentReport run_alignment_benchmark(const AlignmentConfig& config,
                                        const std::function<void(const AlignmentRow&)>& progress = {});

/// Membership rules: every assay of `theo` lies in the batch (or the union
/// of the batches).
bool covers(AssaySet theo, Action batch);
bool covers(AssaySet theo, const std::vector<Action>& batches);

}  // namespace assayplan
