#pragma once

// Reference implementations used to check the library. They recompute
// everything from the definitions: weights from scratch at every state, exact
// outcome distributions, exhaustive enumeration instead of recursion tricks.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "assayplan/env.hpp"
#include "assayplan/synthetic.hpp"

namespace oracle {

using namespace assayplan;

/// Parses CSV text with a schema and computes statistics.
Dataset make_dataset(const std::string& csv, const Schema& schema);

/// Three records with one feature at 0, 1, 2 and targets 0, 1, 2. The
/// feature weight is set so that lambda_k / sigma_k^2 = 1.
Dataset toy_dataset();

struct ExpectimaxResult {
  Action best;
  double best_value = 0.0;
  double gap = 0.0;  // best minus runner-up; infinity with a single action
  std::vector<std::pair<Action, double>> q;
};

/// Exhaustive expectimax over the exact similarity-weighted outcome law.
ExpectimaxResult expectimax(const Dataset& d, const EnvConfig& config, const CandidateState& root);

struct MicroInstance {
  Dataset dataset;
  EnvConfig config;
  CandidateState root;
};

/// N in [3, 6], M in [1, 3], horizon M, info-per-cost reward with tau = 0 and
/// epsilon = 10% of the root H.
MicroInstance micro_instance(std::uint64_t seed);

/// Exact law of next-step signatures: probability per distinct outcome vector.
std::vector<std::pair<std::vector<double>, double>> outcome_law(const Dataset& d, const KernelConfig& k,
                                                                const CandidateState& s, Action a);

/// Best first batch per measured set by enumerating every ordered sequence of
/// disjoint nonempty batches that completes the set. Ties within `tie_tol`
/// go to the cheaper batch, then canonical order.
std::vector<AssaySet> enumerate_subset_policy(std::size_t m, const SubsetReward& reward,
                                              const std::vector<double>& costs, double gamma,
                                              std::vector<double>* values = nullptr, double tie_tol = 1e-9);

/// Random table with N in [n_min, n_max] records, 1 to 3 predictors and 1 to
/// 3 assays with small-integer outcomes; the target is sometimes one of the
/// assay outcomes. Constant columns are redrawn.
Dataset random_dataset(Rng& rng, std::size_t n_min, std::size_t n_max);

/// Random state: each predictor known with probability 0.8, a random subset
/// of assays measured at values drawn from the records.
CandidateState random_state(const Dataset& d, Rng& rng);

/// Mean and variance of Normal(mu, sigma) truncated to [lo, hi].
std::pair<double, double> truncated_normal_moments(double mu, double sigma, double lo, double hi);

}  // namespace oracle
