#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "simeval/errors.hpp"
#include "simeval/geometry.hpp"
#include "simeval/metric_kind.hpp"
#include "simeval/scene.hpp"

namespace simeval {

// Defaults for the follower/leader test behind time-to-collision.
struct TtcParams {
  double ttc_max = 5.0;                                // s
  double heading_threshold = std::numbers::pi / 4.0;  // rad
  double min_lateral_threshold = 1.0;                  // m
  double min_closing_speed = 1e-3;                     // m/s
};

// A per-object scalar time series over the simulated horizon. Derivative
// features keep length T and mark their leading slots invalid.
struct FeatureSeries {
  ObjectId object_id = 0;
  MetricKind metric = MetricKind::LinearSpeed;
  std::vector<double> values;
  std::vector<bool> valid;

  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
  }

  friend bool operator==(const FeatureSeries&, const FeatureSeries&) = default;
};

struct SceneObject {
  ObjectId id = 0;
  ObjectType type = ObjectType::Vehicle;
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;
  std::vector<ObjectState> states;  // T entries

  OrientedBox2D box(std::size_t t) const {
    return {states[t].xy(), states[t].heading, length, width};
  }
};

// Trajectories over the future horizon that interaction features see.
struct FeatureScene {
  double timestep = kDefaultTimestep;
  std::size_t steps = kDefaultFutureLength;
  std::vector<SceneObject> objects;
};

inline FeatureScene logged_feature_scene(const Scenario& s) {
  FeatureScene scene{s.timestep, s.future_length, {}};
  for (const Track& t : s.tracks)
    scene.objects.push_back({t.object_id, t.object_type, t.length, t.width, t.height, logged_future(s, t)});
  return scene;
}

inline FeatureScene rollout_feature_scene(const Scenario& s, const JointScene& rollout) {
  FeatureScene scene{s.timestep, s.future_length, {}};
  for (const auto& [id, states] : rollout.trajectories) {
    const Track* t = s.find_track(id);
    if (t == nullptr)
      throw Error(ErrorCode::InconsistentRollouts,
                  s.scenario_id + ": rollout has unknown object " + std::to_string(id));
    if (states.size() != s.future_length)
      throw Error(ErrorCode::InconsistentRollouts,
                  s.scenario_id + ": object " + std::to_string(id) + " has " +
                      std::to_string(states.size()) + " steps");
    scene.objects.push_back({id, t->object_type, t->length, t->width, t->height, states});
  }
  return scene;
}

namespace detail {

inline FeatureSeries empty_series(ObjectId id, MetricKind m, std::size_t n) {
  return {id, m, std::vector<double>(n, 0.0), std::vector<bool>(n, false)};
}

inline double speed_between(const ObjectState& a, const ObjectState& b, double dt) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double dz = b.z - a.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz) / dt;
}

// Collapses an any-time event onto a constant series valid wherever the
// object itself is valid.
inline FeatureSeries event_series(ObjectId id, MetricKind m, std::span<const ObjectState> states,
                                  bool happened) {
  FeatureSeries out = empty_series(id, m, states.size());
  for (std::size_t t = 0; t < states.size(); ++t) {
    out.valid[t] = states[t].valid;
    out.values[t] = happened ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace detail

inline FeatureSeries linear_speed(ObjectId id, std::span<const ObjectState> states, double dt) {
  FeatureSeries out = detail::empty_series(id, MetricKind::LinearSpeed, states.size());
  for (std::size_t t = 1; t < states.size(); ++t) {
    if (!states[t - 1].valid || !states[t].valid) continue;
    out.values[t] = detail::speed_between(states[t - 1], states[t], dt);
    out.valid[t] = true;
  }
  return out;
}

inline FeatureSeries linear_accel_magnitude(ObjectId id, std::span<const ObjectState> states,
                                            double dt) {
  const FeatureSeries speed = linear_speed(id, states, dt);
  FeatureSeries out = detail::empty_series(id, MetricKind::LinearAccelMag, states.size());
  for (std::size_t t = 2; t < states.size(); ++t) {
    if (!speed.valid[t - 1] || !speed.valid[t]) continue;
    out.values[t] = (speed.values[t] - speed.values[t - 1]) / dt;
    out.valid[t] = true;
  }
  return out;
}

inline FeatureSeries angular_speed(ObjectId id, std::span<const ObjectState> states, double dt) {
  FeatureSeries out = detail::empty_series(id, MetricKind::AngularSpeed, states.size());
  for (std::size_t t = 1; t < states.size(); ++t) {
    if (!states[t - 1].valid || !states[t].valid) continue;
    out.values[t] = signed_angle_step(states[t - 1].heading, states[t].heading) / dt;
    out.valid[t] = true;
  }
  return out;
}

inline FeatureSeries angular_accel_magnitude(ObjectId id, std::span<const ObjectState> states,
                                             double dt) {
  const FeatureSeries omega = angular_speed(id, states, dt);
  FeatureSeries out = detail::empty_series(id, MetricKind::AngularAccelMag, states.size());
  for (std::size_t t = 2; t < states.size(); ++t) {
    if (!omega.valid[t - 1] || !omega.valid[t]) continue;
    out.values[t] = (omega.values[t] - omega.values[t - 1]) / dt;
    out.valid[t] = true;
  }
  return out;
}

// Signed box distance to the nearest other object, one series per object in
// scene order. Pairs whose vertical extents do not overlap are skipped unless
// no pair at that step overlaps vertically, in which case the plain 2D
// minimum is used.
inline std::vector<FeatureSeries> distance_to_nearest_object(const FeatureScene& scene) {
  const std::size_t n = scene.objects.size();
  std::vector<FeatureSeries> out;
  out.reserve(n);
  for (const SceneObject& o : scene.objects)
    out.push_back(detail::empty_series(o.id, MetricKind::DistToNearestObject, scene.steps));
  if (n < 2) return out;

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> radius(n);
  for (std::size_t i = 0; i < n; ++i)
    radius[i] = 0.5 * std::hypot(scene.objects[i].length, scene.objects[i].width);

  for (std::size_t t = 0; t < scene.steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const SceneObject& a = scene.objects[i];
      if (!a.states[t].valid) continue;
      double gated = inf;
      double any = inf;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const SceneObject& b = scene.objects[j];
        if (!b.states[t].valid) continue;
        const bool overlaps_vertically =
            std::abs(a.states[t].z - b.states[t].z) <= 0.5 * (a.height + b.height);
        if (!overlaps_vertically && gated < inf) continue;
        // Disjoint bounding circles bound the separation from below.
        const double lower = norm(a.states[t].xy() - b.states[t].xy()) - radius[i] - radius[j];
        if (lower > 0.0 && lower > (overlaps_vertically ? gated : any)) continue;
        const double d = box_signed_distance(a.box(t), b.box(t));
        any = std::min(any, d);
        if (overlaps_vertically) gated = std::min(gated, d);
      }
      const double d = gated < inf ? gated : any;
      if (d < inf) {
        out[i].values[t] = d;
        out[i].valid[t] = true;
      }
    }
  }
  return out;
}

inline FeatureSeries collision_indication(const FeatureSeries& nearest_distance,
                                          std::span<const ObjectState> states) {
  bool collided = false;
  for (std::size_t t = 0; t < nearest_distance.values.size(); ++t)
    if (nearest_distance.valid[t] && nearest_distance.values[t] < 0.0) collided = true;
  return detail::event_series(nearest_distance.object_id, MetricKind::CollisionIndication, states,
                              collided);
}

inline std::vector<FeatureSeries> collision_indication(const FeatureScene& scene) {
  const auto dist = distance_to_nearest_object(scene);
  std::vector<FeatureSeries> out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    out.push_back(collision_indication(dist[i], scene.objects[i].states));
  return out;
}

// Time until an object reaches the object it follows, at constant speeds.
// A leader must point within heading_threshold of the follower, sit ahead of
// it, and lie within the lateral corridor max(min_lateral, half widths).
inline std::vector<FeatureSeries> time_to_collision(const FeatureScene& scene,
                                                    const TtcParams& params = {}) {
  const std::size_t n = scene.objects.size();
  std::vector<FeatureSeries> speeds;
  speeds.reserve(n);
  for (const SceneObject& o : scene.objects)
    speeds.push_back(linear_speed(o.id, o.states, scene.timestep));

  std::vector<FeatureSeries> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SceneObject& a = scene.objects[i];
    FeatureSeries series = detail::empty_series(a.id, MetricKind::TimeToCollision, scene.steps);
    for (std::size_t t = 0; t < scene.steps; ++t) {
      if (!speeds[i].valid[t]) continue;
      const ObjectState& sa = a.states[t];
      double best_long = std::numeric_limits<double>::infinity();
      std::size_t leader = n;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || !speeds[j].valid[t]) continue;
        const SceneObject& b = scene.objects[j];
        const ObjectState& sb = b.states[t];
        if (angle_diff(sa.heading, sb.heading) > params.heading_threshold) continue;
        const Vec2 rel = rotate(sb.xy() - sa.xy(), -sa.heading);
        const double lateral_limit =
            std::max(params.min_lateral_threshold, 0.5 * (a.width + b.width));
        if (rel.x <= 0.0 || std::abs(rel.y) > lateral_limit) continue;
        if (rel.x < best_long) {
          best_long = rel.x;
          leader = j;
        }
      }
      double ttc = params.ttc_max;
      if (leader < n) {
        const double gap = best_long - 0.5 * (a.length + scene.objects[leader].length);
        const double closing = speeds[i].values[t] - speeds[leader].values[t];
        if (closing > 0.0) {
          // Longitudinally overlapping pairs report the smallest positive TTC.
          const double raw = std::max(gap, 0.0) / std::max(params.min_closing_speed, closing);
          ttc = std::clamp(raw, std::numeric_limits<double>::min(), params.ttc_max);
        }
      }
      series.values[t] = ttc;
      series.valid[t] = true;
    }
    out.push_back(std::move(series));
  }
  return out;
}

// Signed distance from a point to the nearest road edge: positive on the Left
// (off-road), negative on the Right (drivable), zero on the edge.
inline double signed_distance_to_road_edges(Vec2 p, std::span<const MapFeature> map) {
  PolylineDistance best;
  for (const MapFeature& f : map) {
    if (f.kind != MapFeatureKind::RoadEdge) continue;
    const PolylineDistance d = point_to_polyline_distance(p, f.polyline);
    if (d.distance < best.distance) best = d;
  }
  switch (best.side) {
    case Side::Left: return best.distance;
    case Side::Right: return -best.distance;
    case Side::On: return 0.0;
  }
  return best.distance;
}

inline bool has_road_edges(std::span<const MapFeature> map) {
  return std::any_of(map.begin(), map.end(),
                     [](const MapFeature& f) { return f.kind == MapFeatureKind::RoadEdge; });
}

// Per object, the most off-road box corner's signed road-edge distance.
inline std::vector<FeatureSeries> distance_to_road_edge(const FeatureScene& scene,
                                                        std::span<const MapFeature> map) {
  std::vector<FeatureSeries> out;
  const bool scorable = has_road_edges(map);
  for (const SceneObject& o : scene.objects) {
    FeatureSeries series = detail::empty_series(o.id, MetricKind::DistToRoadEdge, scene.steps);
    if (scorable) {
      for (std::size_t t = 0; t < scene.steps; ++t) {
        if (!o.states[t].valid) continue;
        double worst = -std::numeric_limits<double>::infinity();
        for (Vec2 c : o.box(t).corners())
          worst = std::max(worst, signed_distance_to_road_edges(c, map));
        series.values[t] = worst;
        series.valid[t] = true;
      }
    }
    out.push_back(std::move(series));
  }
  return out;
}

inline FeatureSeries offroad_indication(const FeatureSeries& road_edge_distance,
                                        std::span<const ObjectState> states) {
  bool offroad = false;
  bool any_valid = false;
  for (std::size_t t = 0; t < road_edge_distance.values.size(); ++t) {
    if (!road_edge_distance.valid[t]) continue;
    any_valid = true;
    if (road_edge_distance.values[t] > 0.0) offroad = true;
  }
  FeatureSeries out =
      detail::event_series(road_edge_distance.object_id, MetricKind::OffroadIndication, states, offroad);
  if (!any_valid) std::fill(out.valid.begin(), out.valid.end(), false);
  return out;
}

inline std::vector<FeatureSeries> offroad_indication(const FeatureScene& scene,
                                                     std::span<const MapFeature> map) {
  const auto dist = distance_to_road_edge(scene, map);
  std::vector<FeatureSeries> out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    out.push_back(offroad_indication(dist[i], scene.objects[i].states));
  return out;
}

using ObjectFeatures = std::array<FeatureSeries, kNumMetrics>;

// All nine series for every object of the scene whose id is in `evaluated`
// (every object when `evaluated` is empty).
inline std::map<ObjectId, ObjectFeatures> compute_features(const FeatureScene& scene,
                                                           std::span<const MapFeature> map,
                                                           const TtcParams& ttc = {},
                                                           const std::set<ObjectId>& evaluated = {}) {
  const auto nearest = distance_to_nearest_object(scene);
  const auto ttcs = time_to_collision(scene, ttc);
  const auto road = distance_to_road_edge(scene, map);
  std::map<ObjectId, ObjectFeatures> out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& o = scene.objects[i];
    if (!evaluated.empty() && !evaluated.contains(o.id)) continue;
    ObjectFeatures f;
    f[index_of(MetricKind::LinearSpeed)] = linear_speed(o.id, o.states, scene.timestep);
    f[index_of(MetricKind::LinearAccelMag)] = linear_accel_magnitude(o.id, o.states, scene.timestep);
    f[index_of(MetricKind::AngularSpeed)] = angular_speed(o.id, o.states, scene.timestep);
    f[index_of(MetricKind::AngularAccelMag)] = angular_accel_magnitude(o.id, o.states, scene.timestep);
    f[index_of(MetricKind::DistToNearestObject)] = nearest[i];
    f[index_of(MetricKind::CollisionIndication)] = collision_indication(nearest[i], o.states);
    f[index_of(MetricKind::TimeToCollision)] = ttcs[i];
    f[index_of(MetricKind::DistToRoadEdge)] = road[i];
    f[index_of(MetricKind::OffroadIndication)] = offroad_indication(road[i], o.states);
    out.emplace(o.id, std::move(f));
  }
  return out;
}

}  // namespace simeval
