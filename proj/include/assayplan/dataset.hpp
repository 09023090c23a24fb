#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "assayplan/action.hpp"

namespace assayplan {

enum class FeatureKind { predictor, assay_outcome };

std::string to_string(FeatureKind kind);

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::predictor;
  double lambda = 1.0;
  // Populated by compute_feature_stats.
  double mean = 0.0;
  double sigma2 = 0.0;
};

struct AssaySpec {
  std::string name;
  std::size_t outcome_feature = 0;
  std::vector<double> cost;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ZeroVarianceError : public DatasetError {
 public:
  explicit ZeroVarianceError(std::string feature)
      : DatasetError("zero-variance feature: " + feature), feature_(std::move(feature)) {}
  const std::string& feature() const { return feature_; }

 private:
  std::string feature_;
};

/// Immutable table of historical records. Feature values are complete; the
/// target may be absent for some records.
struct Dataset {
  std::vector<FeatureSpec> features;
  std::vector<AssaySpec> assays;
  std::vector<std::string> cost_components;

  std::string id_column;
  std::string target_name;
  double g_min = 0.0;
  double g_max = 0.0;
  /// Assay whose outcome is the target itself, if any.
  std::optional<std::size_t> target_assay;

  std::vector<std::string> record_ids;
  /// Row-major, num_records() x num_features().
  std::vector<double> values;
  std::vector<std::optional<double>> targets;

  bool stats_computed = false;

  std::size_t num_records() const { return targets.size(); }
  std::size_t num_features() const { return features.size(); }
  std::size_t num_assays() const { return assays.size(); }

  double value(std::size_t record, std::size_t feature) const {
    return values[record * features.size() + feature];
  }
  std::span<const double> row(std::size_t record) const {
    return {values.data() + record * features.size(), features.size()};
  }

  std::optional<std::size_t> find_feature(const std::string& name) const;
  std::optional<std::size_t> find_assay(const std::string& name) const;
  std::vector<std::string> assay_names() const;

  /// Cost of a batch given resource trade-off weights rho.
  double scalarized_cost(std::size_t assay, std::span<const double> rho) const;
};

/// Ingestion schema: which columns exist, what they mean, and what assays cost.
struct Schema {
  std::string target;
  std::string id_column;
  double g_min = 0.0;
  double g_max = 0.0;
  std::vector<std::string> cost_components;

  struct Feature {
    std::string column;
    FeatureKind kind = FeatureKind::predictor;
    double lambda = 1.0;
  };
  std::vector<Feature> features;

  struct Assay {
    std::string name;
    std::string outcome_column;
    std::vector<double> cost;
  };
  std::vector<Assay> assays;
};

/// Reads a key-value schema file:
///
///   target = kpuu
///   goal_range = 0.5, 1.0
///   id_column = compound          (optional)
///   cost_components = usd, days
///   feature.<column> = predictor|assay_outcome [, lambda]
///   assay.<name> = <outcome column>, <cost_1>, ..., <cost_q>
///
/// Blank lines and lines starting with '#' are ignored.
Schema load_schema(const std::filesystem::path& path);
Schema parse_schema(const std::string& text);
std::string format_schema(const Schema& schema);
Schema schema_of(const Dataset& dataset);

Dataset load_dataset(const std::filesystem::path& csv_path, const Schema& schema);
Dataset parse_dataset(const std::string& csv_text, const Schema& schema);

/// CSV with the id column (if any), every feature column, and the target
/// column; absent targets are written as empty cells.
std::string format_dataset_csv(const Dataset& dataset);
void write_dataset(const Dataset& dataset, const std::filesystem::path& csv_path,
                   const std::filesystem::path& schema_path);

/// Populates mean and population variance (divisor N) of every feature.
/// Throws ZeroVarianceError for a constant column.
Dataset compute_feature_stats(Dataset dataset);

/// 0-based indices of records whose target is present.
std::vector<std::size_t> target_index_set(const Dataset& dataset);

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate_dataset(const Dataset& dataset);

}  // namespace assayplan
