#include "assayplan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "text_util.hpp"

namespace assayplan {

using detail::parse_double;
using detail::split;
using detail::trim;

std::string to_string(FeatureKind kind) {
  return kind == FeatureKind::predictor ? "predictor" : "assay_outcome";
}

std::optional<std::size_t> Dataset::find_feature(const std::string& name) const {
  for (std::size_t k = 0; k < features.size(); ++k)
    if (features[k].name == name) return k;
  return std::nullopt;
}

std::optional<std::size_t> Dataset::find_assay(const std::string& name) const {
  for (std::size_t j = 0; j < assays.size(); ++j)
    if (assays[j].name == name) return j;
  return std::nullopt;
}

std::vector<std::string> Dataset::assay_names() const {
  std::vector<std::string> out;
  for (const auto& a : assays) out.push_back(a.name);
  return out;
}

double Dataset::scalarized_cost(std::size_t assay, std::span<const double> rho) const {
  const auto& c = assays.at(assay).cost;
  double total = 0.0;
  for (std::size_t q = 0; q < c.size(); ++q) total += (q < rho.size() ? rho[q] : 0.0) * c[q];
  return total;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FeatureKind parse_kind(const std::string& s) {
  if (s == "predictor") return FeatureKind::predictor;
  if (s == "assay_outcome" || s == "assay") return FeatureKind::assay_outcome;
  throw DatasetError("unknown feature kind: " + s);
}

double require_number(std::string_view s, const std::string& what) {
  auto v = parse_double(s);
  if (!v) throw DatasetError("non-numeric value for " + what + ": '" + std::string(s) + "'");
  return *v;
}

}  // namespace

Schema parse_schema(const std::string& text) {
  Schema schema;
  bool have_range = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw DatasetError("schema line " + std::to_string(lineno) + ": expected key = value");
    const std::string key(trim(t.substr(0, eq)));
    const std::string val(trim(t.substr(eq + 1)));

    if (key == "target") {
      schema.target = val;
    } else if (key == "id_column") {
      schema.id_column = val;
    } else if (key == "goal_range") {
      auto parts = split(val, ',');
      if (parts.size() != 2) throw DatasetError("goal_range needs two values");
      schema.g_min = require_number(parts[0], "goal_range");
      schema.g_max = require_number(parts[1], "goal_range");
      have_range = true;
    } else if (key == "g_min") {
      schema.g_min = require_number(val, key);
      have_range = true;
    } else if (key == "g_max") {
      schema.g_max = require_number(val, key);
      have_range = true;
    } else if (key == "cost_components") {
      schema.cost_components = split(val, ',');
    } else if (key.rfind("feature.", 0) == 0) {
      auto parts = split(val, ',');
      Schema::Feature f;
      f.column = key.substr(8);
      f.kind = parse_kind(parts.at(0));
      if (parts.size() > 1) f.lambda = require_number(parts[1], key);
      schema.features.push_back(std::move(f));
    } else if (key.rfind("assay.", 0) == 0) {
      auto parts = split(val, ',');
      Schema::Assay a;
      a.name = key.substr(6);
      a.outcome_column = parts.at(0);
      for (std::size_t i = 1; i < parts.size(); ++i) a.cost.push_back(require_number(parts[i], key));
      schema.assays.push_back(std::move(a));
    } else {
      throw DatasetError("schema line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (schema.target.empty()) throw DatasetError("schema does not name a target column");
  if (!have_range) throw DatasetError("schema does not declare goal_range");
  if (schema.cost_components.empty()) {
    std::size_t q = 0;
    for (const auto& a : schema.assays) q = std::max(q, a.cost.size());
    for (std::size_t i = 0; i < q; ++i) schema.cost_components.push_back("cost" + std::to_string(i + 1));
  }
  return schema;
}

Schema load_schema(const std::filesystem::path& path) { return parse_schema(read_file(path)); }

std::string format_schema(const Schema& schema) {
  std::ostringstream out;
  out << "target = " << schema.target << "\n";
  out << "goal_range = " << detail::format_double(schema.g_min) << ", "
      << detail::format_double(schema.g_max) << "\n";
  if (!schema.id_column.empty()) out << "id_column = " << schema.id_column << "\n";
  out << "cost_components = ";
  for (std::size_t i = 0; i < schema.cost_components.size(); ++i)
    out << (i ? ", " : "") << schema.cost_components[i];
  out << "\n";
  for (const auto& f : schema.features)
    out << "feature." << f.column << " = " << to_string(f.kind) << ", "
        << detail::format_double(f.lambda) << "\n";
  for (const auto& a : schema.assays) {
    out << "assay." << a.name << " = " << a.outcome_column;
    for (double c : a.cost) out << ", " << detail::format_double(c);
    out << "\n";
  }
  return out.str();
}

Schema schema_of(const Dataset& d) {
  Schema s;
  s.target = d.target_name;
  s.id_column = d.id_column;
  s.g_min = d.g_min;
  s.g_max = d.g_max;
  s.cost_components = d.cost_components;
  for (const auto& f : d.features) s.features.push_back({f.name, f.kind, f.lambda});
  for (const auto& a : d.assays) s.assays.push_back({a.name, d.features.at(a.outcome_feature).name, a.cost});
  return s;
}

Dataset parse_dataset(const std::string& csv_text, const Schema& schema) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw DatasetError("empty table");
  const auto header = split(line, ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < header.size(); ++c) col[header[c]] = c;
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = col.find(name);
    if (it == col.end()) throw DatasetError("missing column: " + name);
    return it->second;
  };

  Dataset d;
  d.target_name = schema.target;
  d.id_column = schema.id_column;
  d.g_min = schema.g_min;
  d.g_max = schema.g_max;
  d.cost_components = schema.cost_components;

  const std::size_t target_col = column(schema.target);
  const std::optional<std::size_t> id_col =
      schema.id_column.empty() ? std::nullopt : std::optional(column(schema.id_column));

  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.features) {
    if (d.find_feature(f.column)) throw DatasetError("duplicate feature: " + f.column);
    d.features.push_back({f.column, f.kind, f.lambda, 0.0, 0.0});
    feature_cols.push_back(column(f.column));
  }
  for (const auto& a : schema.assays) {
    auto k = d.find_feature(a.outcome_column);
    if (!k) throw DatasetError("assay " + a.name + " reveals undeclared feature " + a.outcome_column);
    if (a.cost.size() != d.cost_components.size())
      throw DatasetError("assay " + a.name + " has " + std::to_string(a.cost.size()) +
                         " cost components, expected " + std::to_string(d.cost_components.size()));
    if (a.outcome_column == schema.target) d.target_assay = d.assays.size();
    d.assays.push_back({a.name, *k, a.cost});
  }
  if (d.assays.size() > kMaxAssays)
    throw DatasetError("at most " + std::to_string(kMaxAssays) + " assays are supported");

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size())
      throw DatasetError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                         " cells, found " + std::to_string(cells.size()));
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const auto& cell = cells[feature_cols[k]];
      if (trim(cell).empty())
        throw DatasetError("line " + std::to_string(lineno) + ": missing value for feature " + d.features[k].name);
      d.values.push_back(require_number(cell, d.features[k].name + " on line " + std::to_string(lineno)));
    }
    const auto& tcell = cells[target_col];
    if (trim(tcell).empty())
      d.targets.push_back(std::nullopt);
    else
      d.targets.push_back(require_number(tcell, schema.target + " on line " + std::to_string(lineno)));
    d.record_ids.push_back(id_col ? cells[*id_col] : std::to_string(d.targets.size()));
  }
  if (d.targets.empty()) throw DatasetError("empty table");
  return d;
}

Dataset load_dataset(const std::filesystem::path& csv_path, const Schema& schema) {
  return parse_dataset(read_file(csv_path), schema);
}

std::string format_dataset_csv(const Dataset& d) {
  std::ostringstream out;
  std::vector<std::string> cols;
  if (!d.id_column.empty()) cols.push_back(d.id_column);
  for (const auto& f : d.features) cols.push_back(f.name);
  const bool target_is_feature = d.find_feature(d.target_name).has_value();
  if (!target_is_feature) cols.push_back(d.target_name);
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << "\n";
  for (std::size_t i = 0; i < d.num_records(); ++i) {
    bool first = true;
    auto sep = [&] {
      if (!first) out << ",";
      first = false;
    };
    if (!d.id_column.empty()) {
      sep();
      out << d.record_ids[i];
    }
    for (std::size_t k = 0; k < d.num_features(); ++k) {
      sep();
      out << detail::format_double(d.value(i, k));
    }
    if (!target_is_feature) {
      sep();
      if (d.targets[i]) out << detail::format_double(*d.targets[i]);
    }
    out << "\n";
  }
  return out.str();
}

void write_dataset(const Dataset& d, const std::filesystem::path& csv_path,
                   const std::filesystem::path& schema_path) {
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw DatasetError("cannot write " + csv_path.string());
  csv << format_dataset_csv(d);
  std::ofstream sch(schema_path, std::ios::binary);
  if (!sch) throw DatasetError("cannot write " + schema_path.string());
  sch << format_schema(schema_of(d));
}

Dataset compute_feature_stats(Dataset d) {
  const std::size_t n = d.num_records();
  if (n == 0) throw DatasetError("empty table");
  for (std::size_t k = 0; k < d.num_features(); ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += d.value(i, k);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = d.value(i, k) - mean;
      ss += r * r;
    }
    const double var = ss / static_cast<double>(n);
    if (!(var > 0.0)) throw ZeroVarianceError(d.features[k].name);
    d.features[k].mean = mean;
    d.features[k].sigma2 = var;
  }
  d.stats_computed = true;
  return d;
}

std::vector<std::size_t> target_index_set(const Dataset& d) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < d.targets.size(); ++i)
    if (d.targets[i]) out.push_back(i);
  return out;
}

ValidationReport validate_dataset(const Dataset& d) {
  ValidationReport r;
  const std::size_t n = d.num_records();
  if (n == 0) r.violations.push_back("dataset has no records");
  if (d.values.size() != n * d.num_features())
    r.violations.push_back("feature matrix has " + std::to_string(d.values.size()) + " cells, expected " +
                           std::to_string(n * d.num_features()));
  const auto ig = target_index_set(d);
  if (ig.empty()) r.violations.push_back("no record has a target value (I_g is empty)");
  if (!(d.g_min <= d.g_max))
    r.violations.push_back("goal range is not ordered: [" + detail::format_double(d.g_min) + ", " +
                           detail::format_double(d.g_max) + "]");
  if (d.num_assays() > kMaxAssays) r.violations.push_back("too many assays");

  for (const auto& f : d.features) {
    if (!(f.lambda >= 0.0)) r.violations.push_back("feature " + f.name + " has negative lambda");
    if (d.stats_computed && !(f.sigma2 > 0.0)) r.violations.push_back("feature " + f.name + " has zero variance");
  }
  if (!d.stats_computed) r.violations.push_back("feature statistics have not been computed");

  for (const auto& a : d.assays) {
    if (a.outcome_feature >= d.num_features()) {
      r.violations.push_back("assay " + a.name + " references unknown feature #" +
                             std::to_string(a.outcome_feature + 1));
    } else if (d.features[a.outcome_feature].kind != FeatureKind::assay_outcome) {
      r.violations.push_back("assay " + a.name + " reveals feature " + d.features[a.outcome_feature].name +
                             " which is not an assay outcome");
    }
    if (a.cost.size() != d.cost_components.size())
      r.violations.push_back("assay " + a.name + " cost vector has wrong length");
    for (double c : a.cost)
      if (!(c >= 0.0)) r.violations.push_back("assay " + a.name + " has a negative cost component");
  }
  for (std::size_t i = 0; i < d.values.size(); ++i)
    if (!std::isfinite(d.values[i])) {
      r.violations.push_back("non-finite feature value in record " + std::to_string(i / d.num_features() + 1));
      break;
    }

  if (n > 0 && !ig.empty() && static_cast<double>(ig.size()) / static_cast<double>(n) < 0.1)
    r.warnings.push_back("only " + std::to_string(ig.size()) + " of " + std::to_string(n) +
                         " records carry a target; weighted variance may be underestimated");
  return r;
}

}  // namespace assayplan
