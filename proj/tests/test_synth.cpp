#include <catch_amalgamated.hpp>

#include "simeval/features.hpp"
#include "simeval/synth.hpp"

using namespace simeval;
using Catch::Approx;

namespace {

bool geometric(MetricKind m) {
  return m == MetricKind::DistToNearestObject || m == MetricKind::TimeToCollision || m == MetricKind::DistToRoadEdge;
}

void check_fixture(const SynthOutput& out) {
  const auto features = compute_features(logged_feature_scene(out.scenario), out.scenario.map);
  for (const auto& [id, metrics] : out.fixture.expected) {
    for (const auto& [metric, expected] : metrics) {
      const FeatureSeries& got = features.at(id)[index_of(metric)];
      const double tol = geometric(metric) ? 1e-6 : 1e-9;
      INFO(out.scenario.scenario_id << " object " << id << " " << metric_name(metric));
      REQUIRE(got.valid == expected.valid);
      for (std::size_t t = 0; t < got.values.size(); ++t) {
        INFO("t = " << t);
        if (got.valid[t]) REQUIRE(got.values[t] == Approx(expected.values[t]).margin(tol));
      }
    }
  }
}

}  // namespace

TEST_CASE("every template produces a valid scenario", "[synth]") {
  for (SynthTemplate tmpl : kAllTemplates)
    for (std::size_t n : {2, 3, 5, 8}) {
      for (double noise : {0.0, 1.0}) {
        const auto out = generate({tmpl, n, 7, noise});
        INFO(out.scenario.scenario_id);
        REQUIRE_NOTHROW(validate_scenario(out.scenario));
        REQUIRE(out.scenario.tracks.size() == n);
        REQUIRE(strip_late_spawns(out.scenario) == out.scenario);
        REQUIRE(simulated_object_ids(out.scenario).size() == n);
        REQUIRE(out.fixture.scenario_id == out.scenario.scenario_id);
      }
    }
}

TEST_CASE("generation is deterministic in template and seed", "[synth]") {
  for (SynthTemplate tmpl : kAllTemplates) {
    const auto a = generate({tmpl, 4, 99, 0.7});
    const auto b = generate({tmpl, 4, 99, 0.7});
    CHECK(a.scenario == b.scenario);
    const auto c = generate({tmpl, 4, 100, 0.7});
    CHECK_FALSE(a.scenario == c.scenario);
  }
}

TEST_CASE("invalid specs are rejected", "[synth]") {
  CHECK_THROWS_AS(generate({SynthTemplate::StraightRoad, 0, 1, 0.0}), Error);
  CHECK_THROWS_AS(generate({SynthTemplate::StraightRoad, 129, 1, 0.0}), Error);
  CHECK_THROWS_AS(generate({SynthTemplate::CollisionCourse, 1, 1, 0.0}), Error);
  CHECK(template_from_name("curved_road") == SynthTemplate::CurvedRoad);
  CHECK_FALSE(template_from_name("spiral").has_value());
}

TEST_CASE("template fixtures from construction", "[synth]") {
  SECTION("single agent on a straight road at 10 m/s") {
    const auto out = generate({SynthTemplate::StraightRoad, 1, 3, 0.0});
    const auto& speed = out.fixture.expected.at(0).at(MetricKind::LinearSpeed);
    for (std::size_t t = 1; t < speed.values.size(); ++t) CHECK(speed.values[t] == Approx(10.0).margin(1e-12));
  }
  SECTION("collision course pair collides") {
    const auto out = generate({SynthTemplate::CollisionCourse, 2, 3, 0.0});
    for (ObjectId id : {0, 1}) CHECK(out.fixture.expected.at(id).at(MetricKind::CollisionIndication).values[0] == 1.0);
  }
  SECTION("curved road turns at 0.2 rad/s") {
    const auto out = generate({SynthTemplate::CurvedRoad, 1, 3, 0.0});
    const auto& w = out.fixture.expected.at(0).at(MetricKind::AngularSpeed);
    for (std::size_t t = 1; t < w.values.size(); ++t) CHECK(w.values[t] == Approx(0.2).margin(1e-12));
  }
  SECTION("offroad drift leaves the road") {
    const auto out = generate({SynthTemplate::OffroadDrift, 2, 3, 0.0});
    CHECK(out.fixture.expected.at(0).at(MetricKind::OffroadIndication).values[0] == 1.0);
    CHECK(out.fixture.expected.at(1).at(MetricKind::OffroadIndication).values[0] == 0.0);
  }
}

TEST_CASE("feature extraction reproduces the fixtures", "[synth][property]") {
  for (SynthTemplate tmpl : kAllTemplates)
    for (std::size_t n : {1, 2, 4, 7})
      for (std::uint64_t seed : {1, 2, 3})
        for (double noise : {0.0, 0.5}) {
          if (n < 2 && (tmpl == SynthTemplate::FollowingPair || tmpl == SynthTemplate::CollisionCourse)) continue;
          check_fixture(generate({tmpl, n, seed, noise}));
        }
}

TEST_CASE("synthetic_suite cycles through templates", "[synth]") {
  const auto suite = synthetic_suite(12, 5);
  REQUIRE(suite.size() == 12);
  std::set<std::string> ids;
  for (const auto& s : suite) ids.insert(s.scenario.scenario_id);
  CHECK(ids.size() == 12);
}
