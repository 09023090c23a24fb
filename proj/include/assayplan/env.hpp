#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "assayplan/action.hpp"
#include "assayplan/belief.hpp"
#include "assayplan/dataset.hpp"

namespace assayplan {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform index in [0, n); n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

enum class RewardMode { cost, info_per_cost };

struct RewardConfig {
  RewardMode mode = RewardMode::cost;
  std::vector<double> rho{1.0};
  double gamma = 0.95;
  double penalty = -1e6;
  /// Maximum number of batch steps; 0 means the number of assays.
  int horizon = 0;
  double epsilon = 0.10;
  double tau = 0.0;
  /// Whether ending an episode with H > epsilon incurs the penalty. Unset
  /// means: on in cost mode, off in info_per_cost mode.
  std::optional<bool> penalize_unmet_terminal;
};

struct EnvConfig {
  KernelConfig kernel;
  RewardConfig reward;
  /// Throughput limit m (assays per batch); 0 means unlimited.
  std::size_t max_batch = 0;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TransitionOutcome {
  CandidateState next;
  std::size_t record = 0;
  std::vector<std::pair<std::size_t, double>> revealed;  // assay index, value
};

struct OutcomeBranch {
  CandidateState next;
  double probability = 0.0;
  std::vector<std::size_t> records;  // 0-based records producing this outcome
};

/// Weights plus the functionals they induce for one state.
struct Belief {
  BeliefWeights weights;
  Functionals f;
};

/// Eox followed by every nonempty subset of `available` with at most m
/// members (m = 0 means no limit), in canonical order.
std::vector<Action> enumerate_actions(AssaySet available, std::size_t m);

/// The decision process over a fixed historical dataset.
class Environment {
 public:
  Environment(const Dataset& dataset, EnvConfig config);

  const Dataset& dataset() const { return *data_; }
  const EnvConfig& config() const { return config_; }
  const RewardConfig& reward() const { return config_.reward; }
  const KernelConfig& kernel() const { return config_.kernel; }
  const TargetView& targets() const { return targets_; }
  std::size_t max_batch() const;
  int horizon() const;
  bool penalize_unmet_terminal() const;

  AssaySet all_assays() const { return full_set(data_->num_assays()); }
  AssaySet unmeasured(const CandidateState& s) const { return all_assays() & ~s.measured; }

  std::vector<Action> enumerate_actions(const CandidateState& s) const;

  std::vector<double> cost_vector(Action a) const;
  double scalarized_cost(Action a) const;

  /// cost mode: -rho^T c; info_per_cost: delta_h / cost. eox gives 0.
  double step_reward(Action a, std::optional<double> delta_h = std::nullopt) const;

  bool is_terminal(const CandidateState& s, double h) const;
  bool is_feasible(double l) const { return l >= config_.reward.tau; }

  Belief evaluate(const CandidateState& s) const;
  /// Weights and functionals after `a` reveals record `record`'s values,
  /// updated incrementally from the parent belief.
  Belief advance(const Belief& parent, Action a, std::size_t record, const CandidateState& next) const;
  void advance_in_place(Belief& belief, Action a, std::size_t record, const CandidateState& next) const;

  std::vector<Observation> observations(Action a, std::size_t record) const;
  /// Outcome values of the batch assays in `record`, in assay order.
  std::vector<double> signature(Action a, std::size_t record) const;
  CandidateState apply(const CandidateState& s, Action a, std::size_t record) const;
  CandidateState apply_values(const CandidateState& s, Action a, const std::vector<double>& values) const;

  std::size_t sample_record(const BeliefWeights& w, Rng& rng) const;
  TransitionOutcome sample_transition(const CandidateState& s, Action a, const BeliefWeights& w, Rng& rng) const;
  std::vector<OutcomeBranch> transition_distribution(const CandidateState& s, Action a,
                                                     const BeliefWeights& w) const;

  /// Upper bound on |cumulative reward| over any episode.
  double max_abs_return() const;
  /// Throws ConfigError when the penalty cannot dominate every feasible return.
  void check_config() const;

 private:
  const Dataset* data_;
  EnvConfig config_;
  TargetView targets_;
};

}  // namespace assayplan
