#include "assayplan/scenario.hpp"

#include <cmath>
#include <sstream>

#include "assayplan/synthetic.hpp"
#include "text_util.hpp"

namespace assayplan {

namespace {

double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

struct Compound {
  double pred_pgp_100nm, pred_pgp_1um, pred_bcrp_100nm, pred_mrt;
  double pgp_100nm, pgp_1um, bcrp_100nm, kpuu;
};

// Latent efflux liabilities drive both the transporter readouts and kpuu;
// predictions see the latents through extra noise.
Compound draw_compound(Rng& rng) {
  const double zp = sample_standard_normal(rng);
  const double zb = sample_standard_normal(rng);
  const double zm = sample_standard_normal(rng);
  auto n = [&] { return sample_standard_normal(rng); };
  Compound c{};
  c.pgp_100nm = round_to(std::exp(0.9 + 0.8 * zp + 0.15 * n()), 1);
  c.pgp_1um = round_to(std::exp(0.6 + 0.7 * zp + 0.15 * n()), 1);
  c.bcrp_100nm = round_to(std::exp(0.5 + 0.6 * zb + 0.2 * n()), 1);
  c.kpuu = round_to(std::exp(-0.35 - 0.55 * zp - 0.3 * zb + 0.1 * zm + 0.15 * n()), 2);
  const double pp = 0.7 * zp + 0.7 * n();
  c.pred_pgp_100nm = round_to(std::exp(0.9 + 0.8 * pp), 1);
  c.pred_pgp_1um = round_to(std::exp(0.6 + 0.7 * (0.7 * zp + 0.7 * n())), 1);
  c.pred_bcrp_100nm = round_to(std::exp(0.5 + 0.6 * (0.7 * zb + 0.7 * n())), 1);
  c.pred_mrt = round_to(std::exp(0.5 + 0.4 * zm + 0.2 * n()), 1);
  return c;
}

std::string fmt(double v) { return detail::format_double(v); }

}  // namespace

Schema cns_schema(const CnsScenario& sc) {
  Schema s;
  s.target = "kpuu";
  s.id_column = "compound";
  s.g_min = sc.kpuu_threshold;
  s.g_max = sc.kpuu_cap;
  s.cost_components = {"usd", "days"};
  for (const char* p : {"pred_pgp_100nm", "pred_pgp_1um", "pred_bcrp_100nm", "pred_mrt"})
    s.features.push_back({p, FeatureKind::predictor, 1.0});
  for (const char* o : {"pgp_100nm", "pgp_1um", "bcrp_100nm", "kpuu"})
    s.features.push_back({o, FeatureKind::assay_outcome, 1.0});
  const std::vector<double> vitro{sc.in_vitro_usd, sc.in_vitro_days};
  s.assays = {{"pgp_100nm", "pgp_100nm", vitro},
              {"pgp_1um", "pgp_1um", vitro},
              {"bcrp_100nm", "bcrp_100nm", vitro},
              {"kpuu", "kpuu", {sc.in_vivo_usd, sc.in_vivo_days}}};
  return s;
}

Dataset generate_cns_dataset(const CnsScenario& sc) {
  Rng rng(sc.seed);
  std::ostringstream csv;
  csv << "compound,pred_pgp_100nm,pred_pgp_1um,pred_bcrp_100nm,pred_mrt,pgp_100nm,pgp_1um,bcrp_100nm,kpuu\n";
  for (std::size_t i = 0; i < sc.n_records; ++i) {
    const auto c = draw_compound(rng);
    csv << "C" << (i + 1) << ',' << fmt(c.pred_pgp_100nm) << ',' << fmt(c.pred_pgp_1um) << ','
        << fmt(c.pred_bcrp_100nm) << ',' << fmt(c.pred_mrt) << ',' << fmt(c.pgp_100nm) << ',' << fmt(c.pgp_1um)
        << ',' << fmt(c.bcrp_100nm) << ',' << fmt(c.kpuu) << '\n';
  }
  return compute_feature_stats(parse_dataset(csv.str(), cns_schema(sc)));
}

std::vector<CnsCandidate> cns_candidates(std::size_t count, std::uint64_t seed, const CnsScenario&) {
  Rng rng(seed);
  std::vector<CnsCandidate> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto c = draw_compound(rng);
    out.push_back({"candidate_" + std::to_string(i + 1),
                   {{"pred_pgp_100nm", c.pred_pgp_100nm},
                    {"pred_pgp_1um", c.pred_pgp_1um},
                    {"pred_bcrp_100nm", c.pred_bcrp_100nm},
                    {"pred_mrt", c.pred_mrt}}});
  }
  return out;
}

std::vector<CnsCandidate> representative_cns_candidates(const Dataset& d, std::size_t count, double epsilon,
                                                        std::uint64_t seed) {
  Environment env(d, cns_env_config(0.0, epsilon));
  std::vector<CnsCandidate> out;
  std::size_t drawn = 0;
  while (out.size() < count) {
    if (drawn > 1000 * (count + 1)) throw ConfigError("no candidates with a non-terminal root");
    drawn += count;
    out.clear();
    for (auto& c : cns_candidates(drawn, seed)) {
      const auto root = make_candidate(d, c.predictors);
      if (!env.is_terminal(root, env.evaluate(root).f.H)) out.push_back(std::move(c));
      if (out.size() == count) break;
    }
  }
  return out;
}

EnvConfig cns_env_config(double tau, double epsilon) {
  EnvConfig c;
  c.reward.mode = RewardMode::cost;
  c.reward.rho = {1.0, 0.0};
  c.reward.tau = tau;
  c.reward.epsilon = epsilon;
  c.max_batch = 3;
  return c;
}

}  // namespace assayplan
