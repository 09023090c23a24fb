#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "assayplan/scenario.hpp"
#include "assayplan/service.hpp"
#include "doctest.h"
#include "httplib.h"
#include "oracles.hpp"

using namespace assayplan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("assayplan_service_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ServiceConfig small_config(const fs::path& journal = {}) {
  ServiceConfig c;
  c.env = cns_env_config(0.6);
  c.n_e = 3;
  c.n_itr = 200;
  c.threads = 1;
  c.pareto_grid = {0.6, 0.9};
  c.journal = journal;
  return c;
}

json cns_features(const Dataset& d) {
  const auto candidates = representative_cns_candidates(d, 1);
  json f = json::object();
  for (const auto& [k, v] : candidates.front().predictors) f[k] = v;
  return f;
}

// In-process server on a free port.
struct Harness {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit Harness(SessionService& service) {
    service.mount(server);
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~Harness() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

void check_coherent(const SessionService& svc, const std::string& id) {
  const auto snap = svc.snapshot(id);
  REQUIRE(snap);
  const auto& [state, belief] = *snap;
  const auto& d = svc.dataset();
  const auto fresh = compute_weights(state, d, svc.config().env.kernel);
  for (std::size_t i = 0; i < d.num_records(); ++i)
    CHECK(std::abs(fresh.normalized[i] - belief.weights.normalized[i]) <= 1e-12);
  const auto f = evaluate(state, fresh, TargetView(d));
  CHECK(std::abs(f.H - belief.f.H) <= 1e-12);
  CHECK(std::abs(f.L - belief.f.L) <= 1e-12);
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("health") {
    const auto d = generate_cns_dataset();
    SessionService svc(d, small_config());
    Harness h(svc);
    auto c = h.client();
    const auto r = c.Get("/health");
    REQUIRE(r);
    CHECK(r->status == 200);
    const auto j = json::parse(r->body);
    CHECK(j["version"] == kVersion);
    CHECK(j["schema_version"] == kApiSchemaVersion);
    CHECK(j["sessions"] == 0);
  }

  TEST_CASE("session lifecycle over HTTP") {
    const auto d = generate_cns_dataset();
    SessionService svc(d, small_config());
    Harness h(svc);
    auto c = h.client();

    auto r = c.Post("/sessions", json{{"features", cns_features(d)}}.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 201);
    auto created = json::parse(r->body);
    const std::string id = created["session_id"];
    CHECK(created["schema_version"] == kApiSchemaVersion);
    CHECK(created.contains("H"));
    CHECK(created.contains("L"));
    CHECK(created["weights"]["n_records"] == d.num_records());

    r = c.Get(("/sessions/" + id + "/recommendation").c_str());
    REQUIRE(r);
    CHECK(r->status == 200);
    const auto rec = json::parse(r->body);
    CHECK(rec["mlasp"]["steps"].size() >= 1);
    CHECK(rec["config"]["ne"] == 3);
    CHECK(rec["pareto"]["points"].size() == 2);
    int votes = 0;
    for (const auto& v : rec["votes"]) votes += v["votes"].get<int>();
    CHECK(votes + rec["abstentions"].get<int>() == 3);

    // Cached until the state changes.
    r = c.Get(("/sessions/" + id + "/recommendation").c_str());
    CHECK(json::parse(r->body) == rec);
    const auto other = body_of(c.Get(("/sessions/" + id + "/recommendation?ne=2&pareto=0").c_str()));
    CHECK(other["config"]["ne"] == 2);
    CHECK_FALSE(other.contains("pareto"));

    const double h0 = created["H"];
    r = c.Post(("/sessions/" + id + "/outcomes").c_str(), json{{"outcomes", {{"pgp_100nm", 2.0}}}}.dump(),
               "application/json");
    REQUIRE(r);
    CHECK(r->status == 200);
    const auto after = json::parse(r->body);
    CHECK(after["H"].get<double>() != h0);
    CHECK(after["measured"]["pgp_100nm"] == 2.0);
    CHECK(after["step"] == 1);
    check_coherent(svc, id);

    const auto rec2 = body_of(c.Get(("/sessions/" + id + "/recommendation").c_str()));
    CHECK(rec2["step"] == 1);
    CHECK(rec2 != rec);

    r = c.Post(("/sessions/" + id + "/outcomes").c_str(), json{{"outcomes", {{"pgp_100nm", 3.0}}}}.dump(),
               "application/json");
    CHECK(r->status == 409);
    r = c.Post(("/sessions/" + id + "/outcomes").c_str(), json{{"outcomes", {{"nope", 3.0}}}}.dump(),
               "application/json");
    CHECK(r->status == 400);
    r = c.Post(("/sessions/" + id + "/outcomes").c_str(), json{{"outcomes", json::object()}}.dump(), "application/json");
    CHECK(r->status == 400);
    r = c.Post(("/sessions/" + id + "/outcomes").c_str(), "{not json", "application/json");
    CHECK(r->status == 400);

    const auto b = body_of(c.Get(("/sessions/" + id + "/belief?top_k=4").c_str()));
    CHECK(b["analogs"].size() == 4);
    CHECK(b["weight_sum"].get<double>() <= 1.0 + 1e-12);
    CHECK(b["H"] == after["H"]);
    for (std::size_t i = 1; i < 4; ++i) CHECK(b["analogs"][i - 1]["weight"] >= b["analogs"][i]["weight"]);
    CHECK(c.Get(("/sessions/" + id + "/belief?top_k=x").c_str())->status == 400);
  }

  TEST_CASE("error statuses") {
    const auto d = generate_cns_dataset();
    auto cfg = small_config();
    cfg.require_predictors = true;
    SessionService svc(d, cfg);
    Harness h(svc);
    auto c = h.client();

    CHECK(c.Get("/sessions/s99/recommendation")->status == 404);
    CHECK(c.Get("/sessions/s99/belief")->status == 404);
    CHECK(c.Post("/sessions/s99/outcomes", json{{"outcomes", {{"kpuu", 1.0}}}}.dump(), "application/json")->status ==
          404);

    auto r = c.Post("/sessions", json{{"features", {{"bogus", 1.0}}}}.dump(), "application/json");
    CHECK(r->status == 400);
    r = c.Post("/sessions", json{{"features", {{"pred_mrt", 1.0}}}}.dump(), "application/json");
    CHECK(r->status == 422);
    CHECK(json::parse(r->body)["missing"].size() == 3);
    r = c.Post("/sessions", json{{"features", cns_features(d)}, {"schema_version", 7}}.dump(), "application/json");
    CHECK(r->status == 400);
    r = c.Post("/sessions", json{{"features", cns_features(d)}, {"config", {{"warp", 9}}}}.dump(), "application/json");
    CHECK(r->status == 400);
    r = c.Post("/sessions", json{{"features", cns_features(d)}, {"config", {{"ne", "many"}}}}.dump(),
               "application/json");
    CHECK(r->status == 400);

    // Loose epsilon makes the root terminal.
    r = c.Post("/sessions", json{{"features", cns_features(d)}, {"config", {{"epsilon", 100.0}}}}.dump(),
               "application/json");
    REQUIRE(r->status == 201);
    const std::string id = json::parse(r->body)["session_id"];
    r = c.Get(("/sessions/" + id + "/recommendation").c_str());
    CHECK(r->status == 409);
    CHECK(json::parse(r->body)["error"].get<std::string>().find("terminal") != std::string::npos);
    CHECK(c.Get(("/sessions/" + id + "/recommendation?tau=abc").c_str())->status == 400);
  }

  TEST_CASE("empty candidate gives the population variance") {
    const auto d = oracle::toy_dataset();
    ServiceConfig cfg;
    cfg.env.reward.mode = RewardMode::info_per_cost;
    SessionService svc(d, cfg);
    const auto r = svc.create_session(json::object());
    REQUIRE(r.status == 201);
    CHECK(r.body["H"].get<double>() == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    const auto b = svc.belief(r.body["session_id"], 3);
    REQUIRE(b.body["analogs"].size() == 3);
    for (const auto& a : b.body["analogs"]) CHECK(a["weight"].get<double>() == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(svc.belief(r.body["session_id"], 10).body["analogs"].size() == 3);
  }

  TEST_CASE("analog ordering on the three-record example") {
    const auto d = oracle::toy_dataset();
    ServiceConfig cfg;
    cfg.env.reward.mode = RewardMode::info_per_cost;
    SessionService svc(d, cfg);
    const auto r = svc.create_session(json{{"features", {{"x", 1.1}}}});
    REQUIRE(r.status == 201);
    const auto b = svc.belief(r.body["session_id"], 3).body["analogs"];
    CHECK(b[0]["record"] == 2);
    CHECK(b[1]["record"] == 3);
    CHECK(b[2]["record"] == 1);
  }

  TEST_CASE("an exact analog gains weight") {
    const auto d = generate_cns_dataset();
    SessionService svc(d, small_config());
    const auto r = svc.create_session(json{{"features", cns_features(d)}});
    const std::string id = r.body["session_id"];
    const auto before = svc.snapshot(id)->second.weights.normalized;
    const std::size_t rec = 17;
    const double value = d.value(rec, d.assays[0].outcome_feature);
    REQUIRE(svc.record_outcomes(id, json{{"outcomes", {{d.assays[0].name, value}}}}).status == 200);
    CHECK(svc.snapshot(id)->second.weights.normalized[rec] > before[rec]);
  }

  TEST_CASE("belief stays coherent with the state") {
    const auto d = generate_cns_dataset();
    SessionService svc(d, small_config());
    Rng rng(3);
    for (int c = 0; c < 20; ++c) {
      const std::string id = svc.create_session(json{{"features", cns_features(d)}}).body["session_id"];
      std::vector<std::size_t> order{0, 1, 2, 3};
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
      const std::size_t rec = uniform_index(rng, d.num_records());
      for (std::size_t j : order) {
        if (uniform01(rng) < 0.3) continue;
        const double v = d.value(rec, d.assays[j].outcome_feature);
        REQUIRE(svc.record_outcomes(id, json{{"outcomes", {{d.assays[j].name, v}}}}).status == 200);
        check_coherent(svc, id);
      }
    }
  }

  TEST_CASE("reads do not mutate") {
    const auto d = generate_cns_dataset();
    SessionService svc(d, small_config());
    const std::string id = svc.create_session(json{{"features", cns_features(d)}}).body["session_id"];
    const auto before = svc.snapshot(id);
    svc.belief(id, 5);
    svc.recommendation(id, {}, false);
    svc.health();
    const auto after = svc.snapshot(id);
    CHECK(after->first.measured == before->first.measured);
    CHECK(after->first.known == before->first.known);
    CHECK(after->second.weights.normalized == before->second.weights.normalized);
  }

  TEST_CASE("journal replay restores sessions exactly") {
    const auto d = generate_cns_dataset();
    const auto dir = scratch("journal");
    const auto journal = dir / "journal.ndjson";
    std::vector<std::string> ids;
    {
      SessionService svc(d, small_config(journal));
      for (int i = 0; i < 3; ++i) ids.push_back(svc.create_session(json{{"features", cns_features(d)}}).body["session_id"]);
      REQUIRE(svc.record_outcomes(ids[0], json{{"outcomes", {{"pgp_1um", 1.5}, {"bcrp_100nm", 2.25}}}}).status == 200);
      REQUIRE(svc.record_outcomes(ids[0], json{{"outcomes", {{"kpuu", 0.4}}}}).status == 200);
      REQUIRE(svc.record_outcomes(ids[2], json{{"outcomes", {{"pgp_100nm", 3.0}}}}).status == 200);
      REQUIRE(svc.recommendation(ids[1], {}, false).status == 200);

      SessionService again(d, small_config(journal));
      CHECK(again.session_ids() == svc.session_ids());
      for (const auto& id : ids) {
        const auto a = svc.snapshot(id), b = again.snapshot(id);
        CHECK(a->first.measured == b->first.measured);
        CHECK(a->first.known == b->first.known);
        CHECK(a->first.step == b->first.step);
        CHECK(a->second.weights.distance == b->second.weights.distance);
        CHECK(a->second.weights.normalized == b->second.weights.normalized);
        CHECK(a->second.f.H == b->second.f.H);
        CHECK(a->second.f.L == b->second.f.L);
        CHECK(svc.belief(id, 10).body.dump() == again.belief(id, 10).body.dump());
      }
      // New ids continue after the replayed ones.
      CHECK(again.create_session(json::object()).body["session_id"] == "s4");
    }
    std::ofstream(journal, std::ios::app) << "{broken\n";
    CHECK_THROWS_AS(SessionService(d, small_config(journal)), std::runtime_error);
  }

  TEST_CASE("health answers while a plan runs") {
    const auto d = generate_cns_dataset();
    auto cfg = small_config();
    cfg.n_e = 4;
    cfg.n_itr = 20000;
    SessionService svc(d, cfg);
    Harness h(svc);
    const std::string id = svc.create_session(json{{"features", cns_features(d)}}).body["session_id"];
    std::thread slow([&] {
      auto c = h.client();
      c.set_read_timeout(120);
      c.Get(("/sessions/" + id + "/recommendation?pareto=0").c_str());
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    auto c = h.client();
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = c.Get("/health");
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    slow.join();
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(elapsed < std::chrono::seconds(2));
  }
}
