#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "assayplan/ensemble.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace assayplan {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kApiSchemaVersion = 1;

struct ServiceConfig {
  EnvConfig env;
  int n_e = 20;
  int n_itr = 2000;
  PlannerParams planner;  // n_itr and seed are taken from the fields here
  std::uint64_t seed = 2024;
  unsigned threads = 0;
  std::vector<double> pareto_grid = default_sweep_grid();
  MlaspAdvance advance = MlaspAdvance::expected;
  /// Reject sessions that omit a predictor feature (422).
  bool require_predictors = false;
  /// Append-only NDJSON event log; empty disables persistence.
  std::filesystem::path journal;
};

/// Per-session overrides, from the create request or a recommendation query.
struct SessionOverrides {
  std::optional<double> tau;
  std::optional<double> epsilon;
  std::optional<int> n_e;
  std::optional<int> n_itr;
  std::optional<std::uint64_t> seed;

  nlohmann::json to_json() const;
  /// Throws std::invalid_argument on wrong types or unknown keys.
  static SessionOverrides from_json(const nlohmann::json& j);
  /// Fields set in `top` win.
  SessionOverrides merged(const SessionOverrides& top) const;
};

struct Session {
  std::string id;
  CandidateState state;
  Belief belief;
  SessionOverrides overrides;
  std::vector<nlohmann::json> events;
  std::map<std::string, nlohmann::json> recommendation_cache;
  std::mutex mutex;
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// Session store behind the HTTP API. Methods are safe to call concurrently;
/// operations on one session are serialized.
class SessionService {
 public:
  /// Replays `config.journal` when it exists. Throws std::runtime_error on a
  /// corrupt journal.
  SessionService(const Dataset& dataset, ServiceConfig config);

  ServiceResponse health() const;
  ServiceResponse create_session(const nlohmann::json& request);
  ServiceResponse recommendation(const std::string& id, const SessionOverrides& query, bool include_pareto = true);
  ServiceResponse record_outcomes(const std::string& id, const nlohmann::json& request);
  ServiceResponse belief(const std::string& id, std::size_t top_k) const;

  /// Registers the routes on an httplib server.
  void mount(httplib::Server& server);

  std::vector<std::string> session_ids() const;
  /// Snapshot of a session's state and weights; nullopt when unknown.
  std::optional<std::pair<CandidateState, Belief>> snapshot(const std::string& id) const;

  const Dataset& dataset() const { return *data_; }
  const ServiceConfig& config() const { return config_; }

 private:
  EnvConfig env_config(const SessionOverrides& o) const;
  std::shared_ptr<Session> find(const std::string& id) const;
  ServiceResponse apply_create(const nlohmann::json& request, std::optional<std::string> id, bool journal);
  ServiceResponse apply_outcomes(Session& s, const nlohmann::json& request, bool journal);
  void append_journal(const nlohmann::json& event);
  void replay();

  const Dataset* data_;
  ServiceConfig config_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
  std::mutex journal_mutex_;
};

/// Top analogs by normalized weight, descending; ties by record order.
nlohmann::json top_analogs(const Dataset& d, const BeliefWeights& w, std::size_t k);

}  // namespace assayplan
