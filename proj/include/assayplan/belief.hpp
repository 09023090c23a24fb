#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "assayplan/action.hpp"
#include "assayplan/dataset.hpp"

namespace assayplan {

/// What is known about the candidate: initial predictor values plus the
/// outcomes of every assay measured so far.
struct CandidateState {
  std::vector<std::optional<double>> known;  // indexed by feature
  AssaySet measured = 0;
  int step = 0;
  bool ended = false;  // eox has been taken

  static CandidateState empty(const Dataset& d) {
    CandidateState s;
    s.known.assign(d.num_features(), std::nullopt);
    return s;
  }

  friend bool operator==(const CandidateState&, const CandidateState&) = default;
};

class UnknownFeatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Initial state from named feature values. Values for an assay's outcome
/// feature mark that assay as measured. Throws UnknownFeatureError for a name
/// the dataset does not declare, including the target when it is not an
/// assay outcome.
CandidateState make_candidate(const Dataset& d, const std::vector<std::pair<std::string, double>>& values);

/// Predictor features with no value in `s`.
std::vector<std::string> missing_predictors(const Dataset& d, const CandidateState& s);

struct KernelConfig {
  double lambda_w = 1.0;
  /// Keep the target-coinciding assay outcome out of distances.
  bool target_leak_guard = true;
};

class BeliefError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Similarity weights over historical records, with the accumulated
/// distances they were computed from.
struct BeliefWeights {
  std::vector<double> distance;    // d(s, D_i)
  std::vector<double> raw;         // exp(-lambda_w (d_i - min_j d_j))
  std::vector<double> normalized;  // raw / sum(raw)
  std::vector<bool> incorporated;  // features folded into `distance`

  std::size_t size() const { return distance.size(); }
};

/// True if feature k enters distances at all (the target never does).
bool is_distance_feature(const Dataset& d, std::size_t feature, const KernelConfig& config);

double distance(const CandidateState& state, std::size_t record, const Dataset& d, const KernelConfig& config);

BeliefWeights compute_weights(const CandidateState& state, const Dataset& d, const KernelConfig& config);

using Observation = std::pair<std::size_t, double>;  // feature index, value

/// Adds new observations to the accumulated distances and renormalizes.
/// Throws BeliefError if a feature has already been incorporated.
BeliefWeights update_weights_incremental(BeliefWeights weights, std::span<const Observation> observations,
                                         const Dataset& d, const KernelConfig& config);

/// In-place variant for hot loops; same semantics.
void update_weights_in_place(BeliefWeights& weights, std::span<const Observation> observations,
                             const Dataset& d, const KernelConfig& config);

/// Weights restricted to `index_set` and rescaled to sum to one; entry j
/// corresponds to record index_set[j]. Throws BeliefError when the mass on
/// the index set vanishes.
std::vector<double> renormalize_over_targets(const BeliefWeights& weights, std::span<const std::size_t> index_set);

/// Weighted variance of `targets` under `tilde_weights`.
double state_uncertainty(std::span<const double> tilde_weights, std::span<const double> targets);
double weighted_mean(std::span<const double> tilde_weights, std::span<const double> targets);
/// Weighted probability that the target lies in the closed range.
double goal_likelihood(std::span<const double> tilde_weights, std::span<const double> targets, double g_min,
                       double g_max);

struct Functionals {
  double H = 0.0;
  double L = 0.0;
  double g_mean = 0.0;
};

/// Target values of the records in I_g, cached for repeated evaluation.
struct TargetView {
  std::vector<std::size_t> index;
  std::vector<double> g;
  double g_min = 0.0;
  double g_max = 0.0;
  std::optional<std::size_t> target_feature;

  explicit TargetView(const Dataset& d);
};

/// H, L and the weighted mean for a state. When the target-coinciding assay
/// has been measured the target is known exactly: H = 0, L is the indicator
/// of the measured value, and the mean is that value.
Functionals evaluate(const CandidateState& state, const BeliefWeights& weights, const TargetView& targets);

}  // namespace assayplan
