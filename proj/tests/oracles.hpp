#pragma once

// Brute-force reference implementations used to cross-check the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "simeval/geometry.hpp"

namespace oracle {

using simeval::OrientedBox2D;
using simeval::Vec2;

// Corners built from the half-extent vectors, independent of
// OrientedBox2D::corners().
inline std::array<Vec2, 4> box_corners(const OrientedBox2D& b) {
  const double c = std::cos(b.heading), s = std::sin(b.heading);
  const Vec2 f{c * b.length / 2, s * b.length / 2};
  const Vec2 l{-s * b.width / 2, c * b.width / 2};
  return {b.center + f + l, b.center - f + l, b.center - f - l, b.center + f - l};
}

inline std::array<Vec2, 4> box_axes(const OrientedBox2D& a, const OrientedBox2D& b) {
  return {Vec2{std::cos(a.heading), std::sin(a.heading)}, Vec2{-std::sin(a.heading), std::cos(a.heading)},
          Vec2{std::cos(b.heading), std::sin(b.heading)}, Vec2{-std::sin(b.heading), std::cos(b.heading)}};
}

// Smallest push-out distance over the four box normals; negative when some
// axis separates the boxes.
inline double sat_min_overlap(const OrientedBox2D& a, const OrientedBox2D& b) {
  const auto ca = box_corners(a), cb = box_corners(b);
  double best = std::numeric_limits<double>::infinity();
  for (Vec2 axis : box_axes(a, b)) {
    double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
    for (Vec2 p : ca) {
      const double d = p.x * axis.x + p.y * axis.y;
      amin = std::min(amin, d);
      amax = std::max(amax, d);
    }
    for (Vec2 p : cb) {
      const double d = p.x * axis.x + p.y * axis.y;
      bmin = std::min(bmin, d);
      bmax = std::max(bmax, d);
    }
    best = std::min(best, std::min(amax - bmin, bmax - amin));
  }
  return best;
}

inline bool polygons_overlap(const OrientedBox2D& a, const OrientedBox2D& b) { return sat_min_overlap(a, b) > 0; }

inline double point_segment(Vec2 p, Vec2 a, Vec2 b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  double t = ((p.x - a.x) * vx + (p.y - a.y) * vy) / (vx * vx + vy * vy);
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

// Minimum over every vertex of one box against every edge of the other.
inline double vertex_edge_distance(const OrientedBox2D& a, const OrientedBox2D& b) {
  const auto ca = box_corners(a), cb = box_corners(b);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      best = std::min(best, point_segment(ca[i], cb[j], cb[(j + 1) % 4]));
      best = std::min(best, point_segment(cb[i], ca[j], ca[(j + 1) % 4]));
    }
  return best;
}

inline double box_signed_distance(const OrientedBox2D& a, const OrientedBox2D& b) {
  const double overlap = sat_min_overlap(a, b);
  return overlap > 0 ? -overlap : vertex_edge_distance(a, b);
}

inline OrientedBox2D random_box(std::mt19937_64& rng, double spread = 4.0) {
  std::uniform_real_distribution<double> pos(-spread, spread), ang(0.0, simeval::kTwoPi), ext(0.3, 5.0);
  const double x = pos(rng), y = pos(rng);
  return {{x, y}, ang(rng), ext(rng), ext(rng)};
}

}  // namespace oracle
