#include "assayplan/belief.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace assayplan {

bool is_distance_feature(const Dataset& d, std::size_t feature, const KernelConfig& config) {
  if (d.target_assay && d.assays[*d.target_assay].outcome_feature == feature) return !config.target_leak_guard;
  return d.features[feature].name != d.target_name;
}

CandidateState make_candidate(const Dataset& d, const std::vector<std::pair<std::string, double>>& values) {
  auto s = CandidateState::empty(d);
  for (const auto& [name, v] : values) {
    const auto k = d.find_feature(name);
    if (!k || (name == d.target_name && !d.target_assay)) throw UnknownFeatureError("unknown feature: " + name);
    s.known[*k] = v;
    for (std::size_t j = 0; j < d.num_assays(); ++j)
      if (d.assays[j].outcome_feature == *k) s.measured |= assay_bit(j);
  }
  return s;
}

std::vector<std::string> missing_predictors(const Dataset& d, const CandidateState& s) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < d.num_features(); ++k)
    if (d.features[k].kind == FeatureKind::predictor && !s.known[k]) out.push_back(d.features[k].name);
  return out;
}

namespace {

void require_stats(const Dataset& d) {
  if (!d.stats_computed) throw BeliefError("feature statistics have not been computed");
}

// exp(-lambda_w (d_i - min d)) and its normalization.
void refresh_weights(BeliefWeights& w, double lambda_w) {
  const double dmin = *std::min_element(w.distance.begin(), w.distance.end());
  double z = 0.0;
  for (std::size_t i = 0; i < w.distance.size(); ++i) {
    w.raw[i] = std::exp(-lambda_w * (w.distance[i] - dmin));
    z += w.raw[i];
  }
  const double inv = 1.0 / z;
  for (std::size_t i = 0; i < w.raw.size(); ++i) w.normalized[i] = w.raw[i] * inv;
}

}  // namespace

double distance(const CandidateState& state, std::size_t record, const Dataset& d, const KernelConfig& config) {
  require_stats(d);
  double total = 0.0;
  for (std::size_t k = 0; k < d.num_features(); ++k) {
    if (!state.known[k] || !is_distance_feature(d, k, config)) continue;
    const auto& f = d.features[k];
    const double diff = *state.known[k] - d.value(record, k);
    total += f.lambda * diff * diff / f.sigma2;
  }
  return total;
}

BeliefWeights compute_weights(const CandidateState& state, const Dataset& d, const KernelConfig& config) {
  require_stats(d);
  if (!(config.lambda_w > 0.0)) throw BeliefError("lambda_w must be positive");
  if (state.known.size() != d.num_features()) throw BeliefError("state does not match dataset features");
  const std::size_t n = d.num_records();
  BeliefWeights w;
  w.distance.resize(n);
  w.raw.resize(n);
  w.normalized.resize(n);
  w.incorporated.assign(d.num_features(), false);
  for (std::size_t i = 0; i < n; ++i) w.distance[i] = distance(state, i, d, config);
  for (std::size_t k = 0; k < d.num_features(); ++k) w.incorporated[k] = state.known[k].has_value();
  refresh_weights(w, config.lambda_w);
  return w;
}

void update_weights_in_place(BeliefWeights& w, std::span<const Observation> observations, const Dataset& d,
                             const KernelConfig& config) {
  if (observations.empty()) return;
  for (const auto& [k, y] : observations) {
    if (k >= d.num_features()) throw BeliefError("observation of unknown feature");
    if (w.incorporated[k]) throw BeliefError("feature " + d.features[k].name + " is already incorporated");
    w.incorporated[k] = true;
    if (!is_distance_feature(d, k, config)) continue;
    const double scale = d.features[k].lambda / d.features[k].sigma2;
    const std::size_t stride = d.num_features();
    const double* col = d.values.data() + k;
    for (std::size_t i = 0; i < w.distance.size(); ++i) {
      const double diff = y - col[i * stride];
      w.distance[i] += scale * diff * diff;
    }
  }
  refresh_weights(w, config.lambda_w);
}

BeliefWeights update_weights_incremental(BeliefWeights weights, std::span<const Observation> observations,
                                         const Dataset& d, const KernelConfig& config) {
  update_weights_in_place(weights, observations, d, config);
  return weights;
}

std::vector<double> renormalize_over_targets(const BeliefWeights& w, std::span<const std::size_t> index_set) {
  if (index_set.empty()) throw BeliefError("target index set is empty");
  double mass = 0.0;
  for (auto i : index_set) mass += w.raw.at(i);
  if (!(mass >= 1e-300)) throw BeliefError("belief collapsed off target support");
  std::vector<double> out;
  out.reserve(index_set.size());
  const double inv = 1.0 / mass;
  for (auto i : index_set) out.push_back(w.raw[i] * inv);
  return out;
}

double weighted_mean(std::span<const double> tw, std::span<const double> g) {
  double m = 0.0;
  for (std::size_t i = 0; i < tw.size(); ++i) m += tw[i] * g[i];
  return m;
}

double state_uncertainty(std::span<const double> tw, std::span<const double> g) {
  const double m = weighted_mean(tw, g);
  double h = 0.0;
  for (std::size_t i = 0; i < tw.size(); ++i) {
    const double r = g[i] - m;
    h += tw[i] * r * r;
  }
  return h;
}

double goal_likelihood(std::span<const double> tw, std::span<const double> g, double g_min, double g_max) {
  double l = 0.0;
  for (std::size_t i = 0; i < tw.size(); ++i)
    if (g[i] >= g_min && g[i] <= g_max) l += tw[i];
  return std::clamp(l, 0.0, 1.0);
}

TargetView::TargetView(const Dataset& d) : index(target_index_set(d)), g_min(d.g_min), g_max(d.g_max) {
  g.reserve(index.size());
  for (auto i : index) g.push_back(*d.targets[i]);
  if (d.target_assay) target_feature = d.assays[*d.target_assay].outcome_feature;
}

Functionals evaluate(const CandidateState& state, const BeliefWeights& w, const TargetView& t) {
  if (t.target_feature && state.known[*t.target_feature]) {
    const double g = *state.known[*t.target_feature];
    return {0.0, (g >= t.g_min && g <= t.g_max) ? 1.0 : 0.0, g};
  }
  // Fused renormalization over I_g, mean, variance and goal mass.
  double mass = 0.0, s1 = 0.0, in_range = 0.0;
  for (std::size_t j = 0; j < t.index.size(); ++j) {
    const double r = w.raw[t.index[j]];
    mass += r;
    s1 += r * t.g[j];
    if (t.g[j] >= t.g_min && t.g[j] <= t.g_max) in_range += r;
  }
  if (!(mass >= 1e-300)) throw BeliefError("belief collapsed off target support");
  const double mean = s1 / mass;
  double s2 = 0.0;
  for (std::size_t j = 0; j < t.index.size(); ++j) {
    const double r = t.g[j] - mean;
    s2 += w.raw[t.index[j]] * r * r;
  }
  return {s2 / mass, std::clamp(in_range / mass, 0.0, 1.0), mean};
}

}  // namespace assayplan
