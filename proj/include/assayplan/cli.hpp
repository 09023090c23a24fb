#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "assayplan/ensemble.hpp"

namespace assayplan {

class RunConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Command { validate, plan, benchmark, serve, scenario };

std::string to_string(Command c);

/// Key, default and one-line description for every config-file key.
struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string description;
};

const std::vector<ConfigKey>& config_keys();

using ConfigMap = std::map<std::string, std::string>;

/// Flat `key = value` text; '#' and ';' start comment lines.
ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config_file(const std::filesystem::path& path);

/// Fully resolved parameters of one run.
struct RunConfig {
  Command command = Command::plan;
  ConfigMap values;  // every key, after flag > file > default resolution

  std::filesystem::path dataset;
  std::filesystem::path schema;
  std::filesystem::path out;
  std::uint64_t seed = 2024;

  EnvConfig env;
  PlannerParams planner;
  int n_e = 50;
  unsigned threads = 0;
  MlaspAdvance advance = MlaspAdvance::expected;
  std::optional<SweepKind> sweep = SweepKind::tau;
  std::vector<double> sweep_grid;

  std::vector<std::pair<std::string, double>> candidate;
  std::size_t candidate_record = 0;  // 1-based; 0 = none

  int trials = 100;
  std::size_t n_records = 200;
  double epsilon_fraction = 0.10;

  std::string serve_addr = "127.0.0.1:8080";
  std::filesystem::path journal;
  bool require_predictors = false;
};

/// Resolves `flags` over `file` over the defaults. Ensemble size and
/// iteration budget default per command: 50/20000 for plan, 20/5000 for
/// benchmark, 20/2000 for serve. Throws RunConfigError on unknown keys or
/// malformed values.
RunConfig resolve_config(Command command, const ConfigMap& file, const ConfigMap& flags);

/// `key = value` lines in key order, loadable as a config file.
std::string format_effective_config(const RunConfig& config);

/// Exit codes: 0 success, 1 invalid input or configuration, 2 I/O failure.
int cmd_validate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_plan(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_benchmark(const RunConfig& config, std::ostream& out, std::ostream& err);
/// Blocks until SIGINT or SIGTERM.
int cmd_serve(const RunConfig& config, std::ostream& out, std::ostream& err);
/// Writes the bundled stand-in scenario (dataset, schema, candidates).
int cmd_scenario(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Full command line entry point.
int run_cli(int argc, char** argv);

}  // namespace assayplan
