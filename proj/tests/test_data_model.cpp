#include <cmath>
#include <filesystem>

#include "assayplan/synthetic.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace assayplan;

namespace {

Schema one_feature_schema() {
  Schema s;
  s.target = "g";
  s.g_min = 0.5;
  s.g_max = 1.5;
  s.features = {{"x", FeatureKind::predictor, 1.0}};
  return s;
}

}  // namespace

TEST_SUITE("data_model") {
  TEST_CASE("three-row table parses with every target present") {
    const auto d = parse_dataset("x,g\n0,0\n1,1\n2,2\n", one_feature_schema());
    CHECK(d.num_records() == 3);
    CHECK(target_index_set(d) == std::vector<std::size_t>{0, 1, 2});
    CHECK_FALSE(d.stats_computed);
  }

  TEST_CASE("blank target leaves the record out of the target set") {
    const auto d = parse_dataset("x,g\n0,0\n1,\n2,2\n", one_feature_schema());
    CHECK(target_index_set(d) == std::vector<std::size_t>{0, 2});
    CHECK_FALSE(d.targets[1].has_value());
  }

  TEST_CASE("ingestion errors") {
    const auto s = one_feature_schema();
    CHECK_THROWS_WITH_AS(parse_dataset("x,gg\n0,0\n", s), doctest::Contains("missing column"), DatasetError);
    CHECK_THROWS_WITH_AS(parse_dataset("x,g\nabc,0\n", s), doctest::Contains("non-numeric"), DatasetError);
    CHECK_THROWS_WITH_AS(parse_dataset("x,g\n,0\n", s), doctest::Contains("missing value"), DatasetError);
    CHECK_THROWS_WITH_AS(parse_dataset("x,g\n", s), doctest::Contains("empty"), DatasetError);
    CHECK_THROWS_WITH_AS(parse_dataset("x,g\n1,2,3\n", s), doctest::Contains("cells"), DatasetError);
    CHECK_THROWS_AS(load_dataset("/nonexistent/table.csv", s), DatasetError);
  }

  TEST_CASE("population variance") {
    auto d = compute_feature_stats(parse_dataset("x,g\n0,0\n1,1\n2,2\n", one_feature_schema()));
    CHECK(d.features[0].mean == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.features[0].sigma2 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    d = compute_feature_stats(parse_dataset("x,g\n0,0\n2,1\n", one_feature_schema()));
    CHECK(d.features[0].sigma2 == 1.0);
  }

  TEST_CASE("constant column is rejected by name") {
    try {
      compute_feature_stats(parse_dataset("x,g\n5,0\n5,1\n5,2\n", one_feature_schema()));
      FAIL("expected ZeroVarianceError");
    } catch (const ZeroVarianceError& e) {
      CHECK(e.feature() == "x");
    }
  }

  TEST_CASE("feature statistics are idempotent") {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
      const auto d = oracle::random_dataset(rng, 2, 30);
      const auto again = compute_feature_stats(d);
      for (std::size_t k = 0; k < d.num_features(); ++k) {
        CHECK(again.features[k].mean == d.features[k].mean);
        CHECK(again.features[k].sigma2 == d.features[k].sigma2);
      }
    }
  }

  TEST_CASE("csv and schema round trip") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      const auto d = oracle::random_dataset(rng, 2, 30);
      const auto text = format_schema(schema_of(d));
      const auto back = compute_feature_stats(parse_dataset(format_dataset_csv(d), parse_schema(text)));
      REQUIRE(back.num_records() == d.num_records());
      REQUIRE(back.num_features() == d.num_features());
      CHECK(back.target_assay == d.target_assay);
      CHECK(back.g_min == doctest::Approx(d.g_min).epsilon(1e-12));
      for (std::size_t j = 0; j < d.values.size(); ++j) CHECK(std::abs(back.values[j] - d.values[j]) <= 1e-12);
      for (std::size_t r = 0; r < d.num_records(); ++r) {
        REQUIRE(back.targets[r].has_value() == d.targets[r].has_value());
        if (d.targets[r]) CHECK(std::abs(*back.targets[r] - *d.targets[r]) <= 1e-12);
      }
      for (std::size_t j = 0; j < d.num_assays(); ++j) CHECK(back.assays[j].cost == d.assays[j].cost);
    }
  }

  TEST_CASE("target index set holds exactly the rows with a target") {
    Rng rng(8);
    for (int i = 0; i < 50; ++i) {
      const auto d = oracle::random_dataset(rng, 2, 30);
      const auto ig = target_index_set(d);
      for (std::size_t r = 0; r < d.num_records(); ++r)
        CHECK((std::find(ig.begin(), ig.end(), r) != ig.end()) == d.targets[r].has_value());
    }
  }

  TEST_CASE("schema file parsing") {
    const auto s = parse_schema(
        "# comment\n"
        "target = kpuu\n"
        "goal_range = 0.5, 100\n"
        "id_column = compound\n"
        "cost_components = usd, days\n"
        "feature.p = predictor, 2\n"
        "feature.kpuu = assay_outcome\n"
        "assay.invivo = kpuu, 4000, 21\n");
    CHECK(s.target == "kpuu");
    CHECK(s.g_max == 100.0);
    CHECK(s.features.size() == 2);
    CHECK(s.features[0].lambda == 2.0);
    CHECK(s.assays[0].cost == std::vector<double>{4000, 21});
    CHECK(parse_schema(format_schema(s)).assays[0].outcome_column == "kpuu");
    CHECK_THROWS_AS(parse_schema("target = g\n"), DatasetError);
    CHECK_THROWS_AS(parse_schema("goal_range = 0, 1\n"), DatasetError);
    CHECK_THROWS_AS(parse_schema("target = g\ngoal_range = 0, 1\nbogus = 1\n"), DatasetError);
  }

  TEST_CASE("target coinciding with an assay outcome is tagged") {
    const auto s = parse_schema(
        "target = y\ngoal_range = 0, 1\nfeature.x = predictor\nfeature.y = assay_outcome\nassay.a = y, 1\n");
    const auto d = parse_dataset("x,y\n0,0\n1,1\n", s);
    REQUIRE(d.target_assay.has_value());
    CHECK(*d.target_assay == 0);
  }

  TEST_CASE("validation report") {
    Rng rng(1);
    const auto clean = generate_dataset(SyntheticSpec::benchmark(), rng).dataset;
    CHECK(validate_dataset(clean).ok());

    auto bad = clean;
    bad.assays[0].outcome_feature = 99;
    CHECK(validate_dataset(bad).violations.size() == 1);

    bad = clean;
    bad.assays[1].cost[0] = -1.0;
    CHECK(validate_dataset(bad).violations.size() == 1);

    bad = clean;
    bad.g_min = 5.0;
    bad.g_max = 1.0;
    CHECK(validate_dataset(bad).violations.size() == 1);

    bad = clean;
    for (auto& t : bad.targets) t.reset();
    CHECK(validate_dataset(bad).violations.size() == 1);

    bad = clean;
    for (std::size_t i = 5; i < bad.targets.size(); ++i) bad.targets[i].reset();
    const auto r = validate_dataset(bad);
    CHECK(r.ok());
    CHECK(r.warnings.size() == 1);
  }
}
