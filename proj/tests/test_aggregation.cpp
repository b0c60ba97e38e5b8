#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "builders.hpp"
#include "simeval/aggregation.hpp"

using namespace simeval;
using Catch::Approx;

namespace {

LikelihoodEstimate est(double value) { return {MetricKind::LinearSpeed, value, -std::log(value), 10}; }

ComponentArray all(double v) {
  ComponentArray c;
  c.fill(v);
  return c;
}

}  // namespace

TEST_CASE("default weights", "[aggregation]") {
  const auto w = MetricWeights::defaults();
  CHECK(std::abs(w.sum() - 1.0) < 1e-12);
  const double other = w[MetricKind::LinearSpeed];
  CHECK(std::abs(other - 1.0 / 11.0) < 1e-12);
  CHECK(std::abs(w[MetricKind::CollisionIndication] - 2.0 / 11.0) < 1e-12);
  CHECK(std::abs(w[MetricKind::OffroadIndication] - 2.0 / 11.0) < 1e-12);
  for (MetricKind m : kAllMetrics)
    if (!is_event_metric(m)) CHECK(w[m] == other);
}

TEST_CASE("MetricWeights::normalized", "[aggregation]") {
  std::array<double, kNumMetrics> raw;
  raw.fill(3.0);
  const auto w = MetricWeights::normalized(raw);
  CHECK(std::abs(w.sum() - 1.0) < 1e-12);
  CHECK(w[MetricKind::TimeToCollision] == Approx(1.0 / 9.0).epsilon(1e-12));
  raw[2] = 0.0;
  CHECK_THROWS_AS(MetricWeights::normalized(raw), Error);
}

TEST_CASE("scenario_component", "[aggregation]") {
  CHECK(scenario_component(std::vector{est(0.9)}) == Approx(0.9).epsilon(1e-12));
  CHECK(scenario_component(std::vector{est(0.9), est(0.9)}) == Approx(0.9).epsilon(1e-12));
  CHECK(scenario_component(std::vector{est(1.0), est(std::exp(-2.0))}) == Approx(0.367879).margin(1e-6));
  CHECK(scenario_component(std::vector{est(1.0), est(0.5)}, ObjectAggregation::LinearMean) ==
        Approx(0.75).epsilon(1e-12));
  try {
    scenario_component(std::vector<LikelihoodEstimate>{});
    FAIL("expected MetricUnscorable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MetricUnscorable);
  }
}

TEST_CASE("composite", "[aggregation]") {
  const auto w = MetricWeights::defaults();
  CHECK(composite(all(1.0), w) == Approx(1.0).epsilon(1e-12));
  CHECK(composite(all(0.37), w) == Approx(0.37).epsilon(1e-12));

  auto missing = all(0.5);
  missing[3].reset();
  try {
    composite(missing, w);
    FAIL("expected IncompleteBundle");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IncompleteBundle);
  }

  SECTION("renormalized over present components") {
    std::vector<MetricKind> excluded;
    auto c = all(0.5);
    c[index_of(MetricKind::DistToRoadEdge)].reset();
    c[index_of(MetricKind::OffroadIndication)] = 1.0;
    const double got = renormalized_composite(c, w, &excluded);
    CHECK(excluded == std::vector{MetricKind::DistToRoadEdge});
    const double expect = (6.0 / 11 * 0.5 + 2.0 / 11 * 0.5 + 2.0 / 11 * 1.0) / (10.0 / 11);
    CHECK(got == Approx(expect).epsilon(1e-12));
    // complete bundles renormalize to the plain weighted sum
    CHECK(renormalized_composite(all(0.3), w) == Approx(composite(all(0.3), w)).epsilon(1e-12));
  }

  SECTION("monotone in every component") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.01, 0.9);
    for (int i = 0; i < 200; ++i) {
      ComponentArray c;
      for (auto& v : c) v = u(rng);
      const double base = composite(c, w);
      for (std::size_t j = 0; j < kNumMetrics; ++j) {
        auto up = c;
        *up[j] += 0.05;
        REQUIRE(composite(up, w) > base);
      }
      REQUIRE(base > 0.0);
      REQUIRE(base <= 1.0);
    }
  }
}

TEST_CASE("dataset_composite", "[aggregation]") {
  const auto w = MetricWeights::defaults();
  MetricsBundle a{"a", all(0.4), {}, 0.4, 0, 0};
  MetricsBundle b{"b", all(0.6), {}, 0.6, 0, 0};
  CHECK(dataset_composite(std::vector{a}) == 0.4);
  CHECK(dataset_composite(std::vector{a, b}) == Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(dataset_composite(std::vector<MetricsBundle>{}), Error);

  SECTION("equals the double sum over scenarios and metrics") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<MetricsBundle> bundles(1 + trial % 17);
      for (auto& bd : bundles) {
        for (auto& v : bd.component) v = u(rng);
        bd.composite = composite(bd.component, w);
      }
      double brute = 0.0;
      for (const auto& bd : bundles)
        for (std::size_t j = 0; j < kNumMetrics; ++j) brute += w.values()[j] * *bd.component[j];
      brute /= static_cast<double>(bundles.size());
      REQUIRE(std::abs(dataset_composite(bundles) - brute) < 1e-12);
    }
  }
}

TEST_CASE("ADE and minADE", "[aggregation]") {
  const auto s = build::scenario("s", {build::moving(0, 0, 0, 10, 0), build::moving(1, 0, 5, 8, 0)});
  const auto exact = build::logged_rollout(s);

  SECTION("logged oracle") {
    const auto r = build::repeat(exact);
    CHECK(ade(r.rollouts, s) == 0.0);
    CHECK(min_ade(r.rollouts, s) == 0.0);
  }
  SECTION("constant 1 m offset") {
    auto shifted = exact;
    for (auto& [id, states] : shifted.trajectories)
      for (auto& st : states) st.y += 1.0;
    const auto r = build::repeat(shifted);
    CHECK(ade(r.rollouts, s) == Approx(1.0).epsilon(1e-12));
    CHECK(min_ade(r.rollouts, s) == Approx(1.0).epsilon(1e-12));
  }
  SECTION("31 bad rollouts and one exact") {
    auto bad = exact;
    for (auto& [id, states] : bad.trajectories)
      for (auto& st : states) st.x += 3.0;
    auto r = build::repeat(bad);
    r.rollouts[17] = exact;
    CHECK(min_ade(r.rollouts, s) == 0.0);
    CHECK(ade(r.rollouts, s) > 0.0);
    CHECK(ade(r.rollouts, s) == Approx(3.0 * 31 / 32).epsilon(1e-12));
  }
  SECTION("invalid logged steps are skipped") {
    auto s2 = s;
    for (std::size_t i = kDefaultHistoryLength + 40; i < s2.tracks[1].states.size(); ++i)
      s2.tracks[1].states[i] = ObjectState::invalid();
    auto r = build::repeat(exact);
    for (auto& js : r.rollouts)
      for (std::size_t t = 40; t < 80; ++t) js.trajectories[1][t].x += 100.0;
    CHECK(ade(r.rollouts, s2) == 0.0);
  }
}
