#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace oracle {

Dataset make_dataset(const std::string& csv, const Schema& schema) {
  return compute_feature_stats(parse_dataset(csv, schema));
}

Dataset toy_dataset() {
  Schema s;
  s.target = "g";
  s.g_min = 0.5;
  s.g_max = 1.5;
  s.features = {{"x", FeatureKind::predictor, 2.0 / 3.0}};
  return make_dataset("x,g\n0,0\n1,1\n2,2\n", s);
}

namespace {

struct Model {
  const Dataset& d;
  const EnvConfig& c;
  TargetView targets;
  int horizon;
  std::size_t max_batch;
  bool penalize_unmet;

  Model(const Dataset& data, const EnvConfig& config)
      : d(data),
        c(config),
        targets(data),
        horizon(config.reward.horizon > 0 ? config.reward.horizon : static_cast<int>(data.num_assays())),
        max_batch(config.max_batch > 0 ? config.max_batch : data.num_assays()),
        penalize_unmet(config.reward.penalize_unmet_terminal.value_or(config.reward.mode == RewardMode::cost)) {}

  Functionals functionals(const CandidateState& s) const {
    return evaluate(s, compute_weights(s, d, c.kernel), targets);
  }

  double cost(AssaySet a) const {
    double total = 0.0;
    for (std::size_t j = 0; j < d.num_assays(); ++j)
      if ((a >> j) & 1U)
        for (std::size_t q = 0; q < d.assays[j].cost.size(); ++q) total += c.reward.rho[q] * d.assays[j].cost[q];
    return total;
  }

  bool terminal(const CandidateState& s, double h) const {
    const AssaySet all = (AssaySet{1} << d.num_assays()) - 1;
    return s.ended || h <= c.reward.epsilon || s.step >= horizon || s.measured == all;
  }

  std::vector<AssaySet> batches(const CandidateState& s) const {
    std::vector<AssaySet> out;
    const AssaySet all = (AssaySet{1} << d.num_assays()) - 1;
    const AssaySet free = all & ~s.measured;
    for (AssaySet a = 1; a <= all; ++a)
      if ((a & ~free) == 0 && static_cast<std::size_t>(std::popcount(a)) <= max_batch) out.push_back(a);
    return out;
  }

  CandidateState reveal(const CandidateState& s, AssaySet a, const std::vector<double>& sig) const {
    CandidateState n = s;
    std::size_t i = 0;
    for (std::size_t j = 0; j < d.num_assays(); ++j)
      if ((a >> j) & 1U) n.known[d.assays[j].outcome_feature] = sig[i++];
    n.measured |= a;
    n.step += 1;
    return n;
  }

  double q_value(const CandidateState& s, const Functionals& f, AssaySet a, int root_step) const {
    const auto& r = c.reward;
    if (a == 0) return penalize_unmet && f.H > r.epsilon ? r.penalty : 0.0;
    const double discount = std::pow(r.gamma, s.step - root_step);
    double q = 0.0;
    for (const auto& [sig, p] : outcome_law(d, c.kernel, s, Action::of(a))) {
      const auto next = reveal(s, a, sig);
      const auto nf = functionals(next);
      const double reward = r.mode == RewardMode::cost ? -cost(a) : (f.H - nf.H) / cost(a);
      double v = discount * reward;
      if (nf.L < r.tau)
        v += r.penalty;
      else if (terminal(next, nf.H))
        v += penalize_unmet && nf.H > r.epsilon ? r.penalty : 0.0;
      else
        v += value(next, nf, root_step);
      q += p * v;
    }
    return q;
  }

  double value(const CandidateState& s, const Functionals& f, int root_step) const {
    double best = q_value(s, f, 0, root_step);
    for (auto a : batches(s)) best = std::max(best, q_value(s, f, a, root_step));
    return best;
  }
};

}  // namespace

std::vector<std::pair<std::vector<double>, double>> outcome_law(const Dataset& d, const KernelConfig& k,
                                                                const CandidateState& s, Action a) {
  const auto w = compute_weights(s, d, k);
  std::map<std::vector<double>, double> law;
  for (std::size_t i = 0; i < d.num_records(); ++i) {
    std::vector<double> sig;
    for (std::size_t j = 0; j < d.num_assays(); ++j)
      if (contains(a.batch, j)) sig.push_back(d.value(i, d.assays[j].outcome_feature));
    law[sig] += w.normalized[i];
  }
  return {law.begin(), law.end()};
}

ExpectimaxResult expectimax(const Dataset& d, const EnvConfig& config, const CandidateState& root) {
  const Model m(d, config);
  const auto f = m.functionals(root);
  ExpectimaxResult r;
  r.best = Action::eox();
  if (m.terminal(root, f.H)) return r;
  std::vector<AssaySet> actions{0};
  for (auto a : m.batches(root)) actions.push_back(a);
  for (auto a : actions) r.q.emplace_back(Action::of(a), m.q_value(root, f, a, root.step));

  auto better = [&](const std::pair<Action, double>& x, const std::pair<Action, double>& y) {
    const double tol = 1e-9 * std::max(1.0, std::abs(y.second));
    if (x.second > y.second + tol) return true;
    if (x.second < y.second - tol) return false;
    const double cx = m.cost(x.first.batch), cy = m.cost(y.first.batch);
    return cx < cy || (cx == cy && canonical_less(x.first, y.first));
  };
  auto best = r.q.front();
  for (const auto& e : r.q)
    if (better(e, best)) best = e;
  r.best = best.first;
  r.best_value = best.second;
  r.gap = std::numeric_limits<double>::infinity();
  for (const auto& e : r.q)
    if (!(e.first == best.first)) r.gap = std::min(r.gap, best.second - e.second);
  return r;
}

MicroInstance micro_instance(std::uint64_t seed) {
  Rng rng(seed);
  for (;;) {
    const std::size_t n = 3 + uniform_index(rng, 4);
    const std::size_t m = 1 + uniform_index(rng, 3);
    Schema s;
    s.target = "g";
    s.cost_components = {"usd"};
    s.g_min = 3.0;
    s.g_max = 7.0;
    s.features.push_back({"x", FeatureKind::predictor, 1.0});
    for (std::size_t j = 0; j < m; ++j) {
      const auto name = "y" + std::to_string(j + 1);
      s.features.push_back({name, FeatureKind::assay_outcome, 1.0});
      s.assays.push_back({"a" + std::to_string(j + 1), name, {1.0 + 0.5 * static_cast<double>(uniform_index(rng, 5))}});
    }
    std::ostringstream csv;
    csv << "x";
    for (std::size_t j = 0; j < m; ++j) csv << ",y" << j + 1;
    csv << ",g\n";
    for (std::size_t i = 0; i < n; ++i) {
      csv << std::round(uniform01(rng) * 40.0) / 10.0;
      for (std::size_t j = 0; j < m; ++j) csv << ',' << uniform_index(rng, 4);
      csv << ',' << std::round(uniform01(rng) * 100.0) / 10.0 << '\n';
    }
    Dataset d;
    try {
      d = make_dataset(csv.str(), s);
    } catch (const ZeroVarianceError&) {
      continue;
    }
    auto root = CandidateState::empty(d);
    root.known[0] = std::round(uniform01(rng) * 40.0) / 10.0;
    EnvConfig c;
    c.reward.mode = RewardMode::info_per_cost;
    c.reward.rho = {1.0};
    c.reward.tau = 0.0;
    c.reward.horizon = static_cast<int>(m);
    c.max_batch = m;
    const auto h0 = evaluate(root, compute_weights(root, d, c.kernel), TargetView(d)).H;
    c.reward.epsilon = 0.1 * h0;
    return {std::move(d), c, root};
  }
}

std::vector<AssaySet> enumerate_subset_policy(std::size_t m, const SubsetReward& reward,
                                              const std::vector<double>& costs, double gamma,
                                              std::vector<double>* values, double tie_tol) {
  const AssaySet full = (AssaySet{1} << m) - 1;
  auto cost = [&](AssaySet a) {
    double c = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if ((a >> j) & 1U) c += costs[j];
    return c;
  };
  std::vector<AssaySet> policy(full + 1, 0);
  if (values) values->assign(full + 1, 0.0);
  for (AssaySet start = 0; start < full; ++start) {
    // Best total per first batch, over every completing sequence.
    std::map<AssaySet, double> best_by_first;
    std::vector<AssaySet> seq;
    std::function<void(AssaySet)> walk = [&](AssaySet measured) {
      if (measured == full) {
        double total = 0.0, disc = 1.0;
        AssaySet cur = start;
        for (auto a : seq) {
          total += disc * reward(cur, a);
          cur |= a;
          disc *= gamma;
        }
        auto [it, fresh] = best_by_first.emplace(seq.front(), total);
        if (!fresh) it->second = std::max(it->second, total);
        return;
      }
      const AssaySet free = full & ~measured;
      for (AssaySet a = free; a != 0; a = (a - 1) & free) {
        seq.push_back(a);
        walk(measured | a);
        seq.pop_back();
      }
    };
    walk(start);
    AssaySet best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (const auto& [a, v] : best_by_first) {
      bool take = v > best_v + tie_tol;
      if (!take && v >= best_v - tie_tol) {
        const double ca = cost(a), cb = cost(best);
        take = ca < cb || (ca == cb && canonical_less(Action::of(a), Action::of(best)));
      }
      if (best == 0 || take) {
        if (best == 0 || v > best_v + tie_tol) best_v = v;
        best = a;
      }
    }
    policy[start] = best;
    if (values) (*values)[start] = best_v;
  }
  return policy;
}

Dataset random_dataset(Rng& rng, std::size_t n_min, std::size_t n_max) {
  for (;;) {
    const std::size_t n = n_min + uniform_index(rng, n_max - n_min + 1);
    const std::size_t p = 1 + uniform_index(rng, 3);
    const std::size_t m = 1 + uniform_index(rng, 3);
    const bool target_is_assay = uniform01(rng) < 0.3;
    Schema s;
    s.cost_components = {"usd"};
    s.g_min = 2.0 + uniform01(rng);
    s.g_max = s.g_min + 4.0 * uniform01(rng);
    std::ostringstream csv;
    std::vector<std::string> cols;
    for (std::size_t k = 0; k < p; ++k) {
      cols.push_back("x" + std::to_string(k + 1));
      s.features.push_back({cols.back(), FeatureKind::predictor, 0.25 + 2.0 * uniform01(rng)});
    }
    for (std::size_t j = 0; j < m; ++j) {
      cols.push_back("y" + std::to_string(j + 1));
      s.features.push_back({cols.back(), FeatureKind::assay_outcome, 0.25 + 2.0 * uniform01(rng)});
      s.assays.push_back({"a" + std::to_string(j + 1), cols.back(), {0.5 + uniform01(rng)}});
    }
    s.target = target_is_assay ? cols.back() : "g";
    if (!target_is_assay) cols.push_back("g");
    for (std::size_t k = 0; k < cols.size(); ++k) csv << (k ? "," : "") << cols[k];
    csv << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < p; ++k) csv << std::round(uniform01(rng) * 50.0) / 10.0 << ',';
      for (std::size_t j = 0; j < m; ++j) csv << uniform_index(rng, 5) << (j + 1 < m || !target_is_assay ? "," : "");
      if (!target_is_assay && uniform01(rng) >= 0.15) csv << std::round(uniform01(rng) * 80.0) / 10.0;
      csv << '\n';
    }
    try {
      auto d = make_dataset(csv.str(), s);
      if (!target_index_set(d).empty()) return d;
    } catch (const ZeroVarianceError&) {
    }
  }
}

CandidateState random_state(const Dataset& d, Rng& rng) {
  auto s = CandidateState::empty(d);
  for (std::size_t k = 0; k < d.num_features(); ++k)
    if (d.features[k].kind == FeatureKind::predictor && uniform01(rng) < 0.8)
      s.known[k] = std::round(uniform01(rng) * 50.0) / 10.0;
  for (std::size_t j = 0; j < d.num_assays(); ++j)
    if (uniform01(rng) < 0.3) {
      const auto f = d.assays[j].outcome_feature;
      s.known[f] = d.value(uniform_index(rng, d.num_records()), f);
      s.measured |= assay_bit(j);
    }
  return s;
}

std::pair<double, double> truncated_normal_moments(double mu, double sigma, double lo, double hi) {
  const double a = (lo - mu) / sigma, b = (hi - mu) / sigma;
  auto pdf = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
  auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  const double z = cdf(b) - cdf(a);
  const double r = (pdf(a) - pdf(b)) / z;
  const double mean = mu + sigma * r;
  const double var = sigma * sigma * (1.0 + (a * pdf(a) - b * pdf(b)) / z - r * r);
  return {mean, var};
}

}  // namespace oracle
