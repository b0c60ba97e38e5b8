#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace simeval {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kGeomEps = 1e-9;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 rotate(Vec2 a, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}

// Maps any finite angle into [0, 2pi).
inline double normalize_heading(double angle) {
  double r = std::fmod(angle, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;  // -tiny + 2pi rounds up to 2pi
  return r;
}

// Minimal angular distance on SO(2), in [0, pi].
inline double angle_diff(double a, double b) {
  const double d = std::abs(normalize_heading(a) - normalize_heading(b));
  return std::min(d, kTwoPi - d);
}

// Shortest rotation taking `prev` to `next`, in (-pi, pi]; positive is CCW.
// Magnitude always equals angle_diff(prev, next).
inline double signed_angle_step(double prev, double next) {
  double d = normalize_heading(next) - normalize_heading(prev);  // (-2pi, 2pi)
  if (d > std::numbers::pi) d -= kTwoPi;
  if (d <= -std::numbers::pi) d += kTwoPi;
  return d;
}

struct OrientedBox2D {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;
  double width = 0.0;

  // Counter-clockwise, starting at the front-left corner.
  std::array<Vec2, 4> corners() const {
    const Vec2 fwd{std::cos(heading), std::sin(heading)};
    const Vec2 left{-fwd.y, fwd.x};
    const double hl = 0.5 * length;
    const double hw = 0.5 * width;
    return {center + hl * fwd + hw * left, center - hl * fwd + hw * left,
            center - hl * fwd - hw * left, center + hl * fwd - hw * left};
  }
};

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + t * ab));
}

namespace detail {

// Andrew's monotone chain; returns a CCW hull without collinear points.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i > 0; --i) {
    while (k >= lower && cross(hull[k - 1] - hull[k - 2], pts[i - 1] - hull[k - 2]) <= 0.0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace detail

// Signed distance of a point to the boundary of a CCW convex polygon:
// negative inside, positive outside.
inline double signed_distance_to_convex(Vec2 p, std::span<const Vec2> poly) {
  double boundary = std::numeric_limits<double>::infinity();
  bool inside = poly.size() >= 3;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % poly.size()];
    boundary = std::min(boundary, point_segment_distance(p, a, b));
    if (cross(b - a, p - a) < 0.0) inside = false;
  }
  return inside ? -boundary : boundary;
}

// Minkowski difference A - B of two boxes as a CCW convex polygon.
inline std::vector<Vec2> minkowski_difference(const OrientedBox2D& a, const OrientedBox2D& b) {
  std::vector<Vec2> pts;
  pts.reserve(16);
  for (Vec2 pa : a.corners())
    for (Vec2 pb : b.corners()) pts.push_back(pa - pb);
  return detail::convex_hull(std::move(pts));
}

// The boxes overlap iff the origin lies inside A - B. The distance from the
// origin to the boundary of A - B is the separation when disjoint and the
// minimum translation distance when overlapping.
inline double box_signed_distance(const OrientedBox2D& a, const OrientedBox2D& b) {
  const auto diff = minkowski_difference(a, b);
  const double d = signed_distance_to_convex(Vec2{0.0, 0.0}, diff);
  return std::abs(d) < kGeomEps ? 0.0 : d;
}

enum class Side { Left, Right, On };

struct PolylineDistance {
  double distance = std::numeric_limits<double>::infinity();
  Side side = Side::On;
  std::size_t segment = 0;
};

// Euclidean distance to the nearest segment, with the side taken from the
// cross product against that segment's direction. Ties go to the lowest
// segment index.
inline PolylineDistance point_to_polyline_distance(Vec2 p, std::span<const Vec2> polyline) {
  PolylineDistance best;
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    const double d = point_segment_distance(p, polyline[i], polyline[i + 1]);
    if (d < best.distance) {
      best.distance = d;
      best.segment = i;
    }
  }
  if (polyline.size() < 2) return best;
  if (best.distance < kGeomEps) {
    best.distance = 0.0;
    best.side = Side::On;
  } else {
    const Vec2 a = polyline[best.segment];
    const Vec2 b = polyline[best.segment + 1];
    const double c = cross(b - a, p - a);
    // Collinear points beyond an open end count as Left.
    best.side = c < 0.0 ? Side::Right : Side::Left;
  }
  return best;
}

}  // namespace simeval
