#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "simeval/geometry.hpp"

using namespace simeval;
using Catch::Approx;

TEST_CASE("normalize_heading maps into [0, 2pi)", "[geometry]") {
  CHECK(normalize_heading(0.0) == 0.0);
  CHECK(normalize_heading(kTwoPi) == 0.0);
  CHECK(normalize_heading(-1e-18) == 0.0);
  CHECK(normalize_heading(7.0) == Approx(7.0 - kTwoPi).margin(1e-12));
  CHECK(normalize_heading(-std::numbers::pi / 2) == Approx(1.5 * std::numbers::pi).margin(1e-12));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng);
    const double n = normalize_heading(a);
    REQUIRE(n >= 0.0);
    REQUIRE(n < kTwoPi);
    const double k = (a - n) / kTwoPi;
    REQUIRE(std::abs(k - std::round(k)) < 1e-9);
  }
}

TEST_CASE("angle_diff", "[geometry]") {
  const double deg = std::numbers::pi / 180.0;
  CHECK(angle_diff(0.0, 0.0) == 0.0);
  CHECK(angle_diff(350 * deg, 10 * deg) == Approx(0.3490659).margin(1e-7));
  CHECK(std::abs(angle_diff(350 * deg, 10 * deg) - 20 * deg) < 1e-9);
  CHECK(angle_diff(std::numbers::pi, 0.0) == Approx(std::numbers::pi).margin(1e-12));

  SECTION("triangle inequality and symmetry on random triples") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    for (int i = 0; i < 2000; ++i) {
      const double a = u(rng), b = u(rng), c = u(rng);
      REQUIRE(angle_diff(a, c) <= angle_diff(a, b) + angle_diff(b, c) + 1e-12);
      REQUIRE(angle_diff(a, b) == Approx(angle_diff(b, a)).margin(1e-12));
      REQUIRE(angle_diff(a, b) >= 0.0);
      REQUIRE(angle_diff(a, b) <= std::numbers::pi + 1e-12);
    }
  }
}

TEST_CASE("signed_angle_step", "[geometry]") {
  CHECK(signed_angle_step(0.0, 0.1) == Approx(0.1).margin(1e-12));
  CHECK(signed_angle_step(0.1, 0.0) == Approx(-0.1).margin(1e-12));
  CHECK(signed_angle_step(6.2, 0.1) == Approx(0.1831853).margin(1e-7));
  CHECK(std::abs(signed_angle_step(6.2, 0.1) - (0.1 - 6.2 + kTwoPi)) < 1e-12);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), b = u(rng);
    const double s = signed_angle_step(a, b);
    REQUIRE(s > -std::numbers::pi);
    REQUIRE(s <= std::numbers::pi);
    REQUIRE(std::abs(s) == Approx(angle_diff(a, b)).margin(1e-12));
  }
}

TEST_CASE("box_signed_distance examples", "[geometry]") {
  const OrientedBox2D a{{0, 0}, 0, 2, 2};
  CHECK(box_signed_distance(a, {{4, 0}, 0, 2, 2}) == Approx(2.0).margin(1e-12));
  CHECK(box_signed_distance(a, a) == Approx(-2.0).margin(1e-12));
  CHECK(box_signed_distance(a, {{2, 0}, 0, 2, 2}) == 0.0);
  // corner to corner
  CHECK(box_signed_distance(a, {{3, 3}, 0, 2, 2}) == Approx(std::sqrt(2.0)).margin(1e-12));
  // 45 degree box touching a face with its corner
  CHECK(box_signed_distance(a, {{1 + std::sqrt(2.0), 0}, std::numbers::pi / 4, 2, 2}) == Approx(0.0).margin(1e-9));
}

TEST_CASE("box_signed_distance matches SAT and vertex-edge oracles", "[geometry][property]") {
  std::mt19937_64 rng(2024);
  int overlapping = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = oracle::random_box(rng);
    const auto b = oracle::random_box(rng);
    const double d = box_signed_distance(a, b);
    const double ref = oracle::box_signed_distance(a, b);
    INFO("pair " << i);
    REQUIRE(d == Approx(ref).margin(1e-6));
    REQUIRE((d < 0) == oracle::polygons_overlap(a, b));
    if (d < 0) ++overlapping;
  }
  // the sample must exercise both branches
  CHECK(overlapping > 100);
  CHECK(overlapping < 900);
}

TEST_CASE("box_signed_distance symmetry and rigid invariance", "[geometry][property]") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> shift(-50.0, 50.0), ang(0.0, kTwoPi);
  for (int i = 0; i < 500; ++i) {
    const auto a = oracle::random_box(rng);
    const auto b = oracle::random_box(rng);
    const double d = box_signed_distance(a, b);
    REQUIRE(box_signed_distance(b, a) == Approx(d).margin(1e-9));

    const Vec2 t{shift(rng), shift(rng)};
    const double r = ang(rng);
    auto move = [&](OrientedBox2D box) {
      box.center = rotate(box.center, r) + t;
      box.heading = normalize_heading(box.heading + r);
      return box;
    };
    REQUIRE(box_signed_distance(move(a), move(b)) == Approx(d).margin(1e-6));
  }
}

TEST_CASE("point_to_polyline_distance", "[geometry]") {
  const std::vector<Vec2> pl{{-1, 0}, {1, 0}};

  auto r = point_to_polyline_distance({0, 1}, pl);
  CHECK(r.distance == Approx(1.0).margin(1e-12));
  CHECK(r.side == Side::Left);

  r = point_to_polyline_distance({0.3, 0}, pl);
  CHECK(r.distance == 0.0);
  CHECK(r.side == Side::On);

  r = point_to_polyline_distance({2, 1}, pl);
  CHECK(r.distance == Approx(std::sqrt(2.0)).margin(1e-12));
  CHECK(r.side == Side::Left);

  r = point_to_polyline_distance({0, -2}, pl);
  CHECK(r.distance == Approx(2.0).margin(1e-12));
  CHECK(r.side == Side::Right);

  SECTION("ties go to the first segment") {
    // equidistant from the ends of two segments of a V
    const std::vector<Vec2> v{{-1, 1}, {0, 0}, {1, 1}};
    const auto t = point_to_polyline_distance({0, -1}, v);
    CHECK(t.segment == 0);
    CHECK(t.distance == Approx(1.0).margin(1e-12));
  }

  SECTION("brute-force distance on random polylines") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int i = 0; i < 300; ++i) {
      std::vector<Vec2> poly;
      for (int k = 0; k < 6; ++k) poly.push_back({u(rng), u(rng)});
      const Vec2 p{u(rng), u(rng)};
      double ref = 1e300;
      for (std::size_t k = 0; k + 1 < poly.size(); ++k) ref = std::min(ref, oracle::point_segment(p, poly[k], poly[k + 1]));
      REQUIRE(point_to_polyline_distance(p, poly).distance == Approx(ref).margin(1e-12));
    }
  }
}
