#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "assayplan/env.hpp"

namespace assayplan {

/// Synthetic brain-penetration scenario: QSAR predictions for three efflux
/// transporter assays and residence time, the three in-vitro assays
/// themselves ($400, 7 days each) and an in-vivo kpuu assay ($4000, 21 days)
/// whose outcome is the target. High potential means kpuu >= 0.5.
struct CnsScenario {
  std::size_t n_records = 220;
  std::uint64_t seed = 7;
  double in_vitro_usd = 400.0;
  double in_vitro_days = 7.0;
  double in_vivo_usd = 4000.0;
  double in_vivo_days = 21.0;
  double kpuu_threshold = 0.5;
  double kpuu_cap = 100.0;
};

Schema cns_schema(const CnsScenario& scenario = {});

/// Records with complete outcomes; statistics computed.
Dataset generate_cns_dataset(const CnsScenario& scenario = {});

struct CnsCandidate {
  std::string name;
  std::vector<std::pair<std::string, double>> predictors;
};

/// Fresh compounds drawn from the same generator (disjoint from the dataset)
/// with only their predictions known.
std::vector<CnsCandidate> cns_candidates(std::size_t count, std::uint64_t seed, const CnsScenario& scenario = {});

/// The first `count` fresh candidates (drawn from `seed`) whose root state is
/// not already terminal at `epsilon`.
std::vector<CnsCandidate> representative_cns_candidates(const Dataset& d, std::size_t count, double epsilon = 0.10,
                                                        std::uint64_t seed = 99);

/// Cost-mode environment in dollars: throughput 3, horizon 4.
EnvConfig cns_env_config(double tau, double epsilon = 0.10);

}  // namespace assayplan
