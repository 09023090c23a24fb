#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "assayplan/planner.hpp"

namespace assayplan {

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Exceptions from workers are rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads = 0);

struct EnsembleConfig {
  int n_e = 50;
  std::uint64_t base_seed = 0;
  PlannerParams planner;
  unsigned threads = 0;
};

/// Member j (1-based) plans with seed base_seed + j.
std::vector<Policy> run_ensemble(const Environment& env, const CandidateState& root, const EnsembleConfig& config);

struct VoteHistogram {
  std::map<Action, int, CanonicalLess> counts;
  int abstentions = 0;

  int total() const;
};

VoteHistogram vote_actions(const std::vector<Policy>& policies, const StateKey& prefix);

/// The k most voted batches; ties by lower scalarized cost, then canonical order.
std::vector<Action> top_k_actions(const VoteHistogram& histogram, std::size_t k, const Environment& env);

enum class MlaspAdvance {
  expected,  // follow the record nearest the weight-expected outcome
  sampled,   // follow a record drawn from the current weights
};

struct MlaspOptions {
  MlaspAdvance advance = MlaspAdvance::expected;
  std::uint64_t seed = 0;  // used by the sampled mode only
};

struct MlaspStep {
  Action action;
  VoteHistogram votes;
  double vote_fraction = 0.0;
  std::vector<double> cumulative_cost;
  double cumulative_spend = 0.0;
  /// Record whose outcomes were followed (batch steps only).
  std::optional<std::size_t> record;
  double H = 0.0;  // after the step
  double L = 0.0;
  double g_mean = 0.0;
};

struct Mlasp {
  double initial_H = 0.0;
  double initial_L = 0.0;
  std::vector<MlaspStep> steps;
  bool truncated = false;   // every member abstained before the path ended
  bool infeasible = false;  // a state on the path had L < tau
  bool constraint_met = false;
  double spend = 0.0;
  std::vector<double> cost;
  double terminal_H = 0.0;

  Action first_action() const { return steps.empty() ? Action::eox() : steps.front().action; }
};

Mlasp build_mlasp(const std::vector<Policy>& policies, const Environment& env, const CandidateState& root,
                  const MlaspOptions& options = {});

enum class SweepKind { tau, epsilon };

struct ParetoPoint {
  double tolerance = 0.0;
  double spend = 0.0;
  Action first_batch;
  double terminal_H = 0.0;
  bool constraint_met = false;
  bool dominated = false;
};

struct ParetoResult {
  SweepKind kind = SweepKind::tau;
  std::vector<ParetoPoint> points;  // in grid order
  std::vector<ParetoPoint> front;   // non-dominated, sorted by spend, unique spends
};

/// {0.0, 0.1, ..., 1.0}.
std::vector<double> default_sweep_grid();

/// Marks dominated points and builds the front. A point is dominated when
/// another spends no more for a target at least as strict (higher tau, or
/// lower epsilon), and is better in one of the two.
ParetoResult pareto_front(SweepKind kind, std::vector<ParetoPoint> points);

/// One ensemble and MLASP per grid value, with the environment's reward
/// config overridden at that tolerance.
ParetoResult pareto_sweep(const Dataset& dataset, const EnvConfig& env_config, const CandidateState& root,
                          const EnsembleConfig& config, const std::vector<double>& grid,
                          SweepKind kind = SweepKind::tau, const MlaspOptions& options = {});

}  // namespace assayplan
