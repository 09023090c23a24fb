#include "assayplan/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace assayplan {

std::vector<Action> enumerate_actions(AssaySet available, std::size_t m) {
  const auto items = members(available);
  const std::size_t limit = (m == 0) ? items.size() : std::min(m, items.size());
  std::vector<Action> out{Action::eox()};
  // Subsets of the index list, by size, each size in lexicographic order.
  for (std::size_t k = 1; k <= limit; ++k) {
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
      AssaySet s = 0;
      for (auto i : idx) s |= assay_bit(items[i]);
      out.push_back(Action::of(s));
      std::size_t pos = k;
      while (pos > 0 && idx[pos - 1] == items.size() - k + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t i = pos; i < k; ++i) idx[i] = idx[i - 1] + 1;
    }
  }
  return out;
}

Environment::Environment(const Dataset& dataset, EnvConfig config)
    : data_(&dataset), config_(std::move(config)), targets_(dataset) {
  if (!dataset.stats_computed) throw ConfigError("dataset statistics have not been computed");
  if (targets_.index.empty()) throw ConfigError("dataset has no target values");
}

std::size_t Environment::max_batch() const {
  const auto m = data_->num_assays();
  return config_.max_batch == 0 ? m : std::min(config_.max_batch, m);
}

int Environment::horizon() const {
  return config_.reward.horizon > 0 ? config_.reward.horizon : static_cast<int>(data_->num_assays());
}

bool Environment::penalize_unmet_terminal() const {
  return config_.reward.penalize_unmet_terminal.value_or(config_.reward.mode == RewardMode::cost);
}

std::vector<Action> Environment::enumerate_actions(const CandidateState& s) const {
  return assayplan::enumerate_actions(unmeasured(s), max_batch());
}

std::vector<double> Environment::cost_vector(Action a) const {
  std::vector<double> c(data_->cost_components.size(), 0.0);
  for (auto j : members(a.batch)) {
    const auto& cj = data_->assays[j].cost;
    for (std::size_t q = 0; q < c.size() && q < cj.size(); ++q) c[q] += cj[q];
  }
  return c;
}

double Environment::scalarized_cost(Action a) const {
  double total = 0.0;
  for (auto j : members(a.batch)) total += data_->scalarized_cost(j, config_.reward.rho);
  return total;
}

double Environment::step_reward(Action a, std::optional<double> delta_h) const {
  if (a.is_eox()) return 0.0;
  const double c = scalarized_cost(a);
  if (config_.reward.mode == RewardMode::cost) return -c;
  if (!delta_h) throw ConfigError("info_per_cost reward needs the uncertainty reduction");
  if (!(c > 0.0)) throw ConfigError("info_per_cost reward with zero batch cost");
  return *delta_h / c;
}

bool Environment::is_terminal(const CandidateState& s, double h) const {
  return s.ended || h <= config_.reward.epsilon || s.step >= horizon() || unmeasured(s) == 0;
}

Belief Environment::evaluate(const CandidateState& s) const {
  Belief b;
  b.weights = compute_weights(s, *data_, config_.kernel);
  b.f = assayplan::evaluate(s, b.weights, targets_);
  return b;
}

std::vector<Observation> Environment::observations(Action a, std::size_t record) const {
  std::vector<Observation> obs;
  for (auto j : members(a.batch)) {
    const auto k = data_->assays[j].outcome_feature;
    obs.emplace_back(k, data_->value(record, k));
  }
  return obs;
}

std::vector<double> Environment::signature(Action a, std::size_t record) const {
  std::vector<double> sig;
  for (auto j : members(a.batch)) sig.push_back(data_->value(record, data_->assays[j].outcome_feature));
  return sig;
}

CandidateState Environment::apply_values(const CandidateState& s, Action a, const std::vector<double>& values) const {
  if (a.is_eox()) {
    CandidateState next = s;
    next.ended = true;
    return next;
  }
  if ((a.batch & s.measured) != 0) throw ConfigError("batch " + to_string(a) + " contains a measured assay");
  const auto js = members(a.batch);
  if (values.size() != js.size()) throw ConfigError("outcome signature does not match batch size");
  CandidateState next = s;
  for (std::size_t i = 0; i < js.size(); ++i) next.known[data_->assays[js[i]].outcome_feature] = values[i];
  next.measured |= a.batch;
  next.step += 1;
  return next;
}

CandidateState Environment::apply(const CandidateState& s, Action a, std::size_t record) const {
  return apply_values(s, a, a.is_eox() ? std::vector<double>{} : signature(a, record));
}

Belief Environment::advance(const Belief& parent, Action a, std::size_t record,
                             const CandidateState& next) const {
  Belief b = parent;
  advance_in_place(b, a, record, next);
  return b;
}

void Environment::advance_in_place(Belief& belief, Action a, std::size_t record, const CandidateState& next) const {
  const auto obs = observations(a, record);
  update_weights_in_place(belief.weights, obs, *data_, config_.kernel);
  belief.f = assayplan::evaluate(next, belief.weights, targets_);
}

std::size_t Environment::sample_record(const BeliefWeights& w, Rng& rng) const {
  const double u = uniform01(rng);
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < w.normalized.size(); ++i) {
    if (w.normalized[i] <= 0.0) continue;
    cum += w.normalized[i];
    if (u < cum) return i;
    last_positive = i;
  }
  // The final prefix is treated as exactly one.
  return last_positive;
}

TransitionOutcome Environment::sample_transition(const CandidateState& s, Action a, const BeliefWeights& w,
                                                 Rng& rng) const {
  if (a.is_eox()) throw ConfigError("eox has no outcome to sample");
  if ((a.batch & s.measured) != 0) throw ConfigError("batch " + to_string(a) + " contains a measured assay");
  TransitionOutcome out;
  out.record = sample_record(w, rng);
  out.next = apply(s, a, out.record);
  for (auto j : members(a.batch))
    out.revealed.emplace_back(j, data_->value(out.record, data_->assays[j].outcome_feature));
  return out;
}

std::vector<OutcomeBranch> Environment::transition_distribution(const CandidateState& s, Action a,
                                                                const BeliefWeights& w) const {
  if (a.is_eox()) throw ConfigError("eox has no outcome distribution");
  std::vector<OutcomeBranch> out;
  std::vector<std::vector<double>> sigs;
  for (std::size_t i = 0; i < data_->num_records(); ++i) {
    auto sig = signature(a, i);
    auto it = std::find(sigs.begin(), sigs.end(), sig);
    if (it == sigs.end()) {
      sigs.push_back(sig);
      out.push_back({apply(s, a, i), w.normalized[i], {i}});
    } else {
      auto& b = out[static_cast<std::size_t>(it - sigs.begin())];
      b.probability += w.normalized[i];
      b.records.push_back(i);
    }
  }
  return out;
}

double Environment::max_abs_return() const {
  const int h = horizon();
  if (config_.reward.mode == RewardMode::cost) return scalarized_cost(Action::of(all_assays()));
  double c_min = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < data_->num_assays(); ++j) c_min = std::min(c_min, data_->scalarized_cost(j, config_.reward.rho));
  const auto [lo, hi] = std::minmax_element(targets_.g.begin(), targets_.g.end());
  const double range = *hi - *lo;
  return static_cast<double>(h) * (range * range / 4.0) / c_min;
}

void Environment::check_config() const {
  const auto& r = config_.reward;
  if (!(config_.kernel.lambda_w > 0.0)) throw ConfigError("lambda_w must be positive");
  if (!(r.gamma >= 0.0 && r.gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(r.tau >= 0.0 && r.tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
  if (!(r.epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  if (!(r.penalty < 0.0)) throw ConfigError("penalty must be negative");
  double rho_sum = 0.0;
  for (double v : r.rho) {
    if (!(v >= 0.0)) throw ConfigError("rho components must be non-negative");
    rho_sum += v;
  }
  if (r.mode == RewardMode::cost && !(rho_sum > 0.0)) throw ConfigError("rho must have positive mass in cost mode");
  if (r.mode == RewardMode::info_per_cost)
    for (std::size_t j = 0; j < data_->num_assays(); ++j)
      if (!(data_->scalarized_cost(j, r.rho) > 0.0))
        throw ConfigError("assay " + data_->assays[j].name + " has zero scalarized cost in info_per_cost mode");
  const double bound = max_abs_return();
  if (!(-r.penalty > bound))
    throw ConfigError("penalty " + std::to_string(r.penalty) + " does not dominate the largest possible return " +
                      std::to_string(bound) + "; use a penalty below -" + std::to_string(bound));
}

}  // namespace assayplan
