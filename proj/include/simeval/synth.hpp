#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "simeval/errors.hpp"
#include "simeval/features.hpp"
#include "simeval/geometry.hpp"
#include "simeval/metric_kind.hpp"
#include "simeval/scene.hpp"

namespace simeval {

enum class SynthTemplate {
  StraightRoad,
  CurvedRoad,
  FourWayIntersection,
  FollowingPair,
  CollisionCourse,
  OffroadDrift,
};

inline constexpr std::array<SynthTemplate, 6> kAllTemplates = {
    SynthTemplate::StraightRoad,  SynthTemplate::CurvedRoad,      SynthTemplate::FourWayIntersection,
    SynthTemplate::FollowingPair, SynthTemplate::CollisionCourse, SynthTemplate::OffroadDrift,
};

inline const char* to_string(SynthTemplate t) {
  switch (t) {
    case SynthTemplate::StraightRoad: return "straight_road";
    case SynthTemplate::CurvedRoad: return "curved_road";
    case SynthTemplate::FourWayIntersection: return "four_way_intersection";
    case SynthTemplate::FollowingPair: return "following_pair";
    case SynthTemplate::CollisionCourse: return "collision_course";
    case SynthTemplate::OffroadDrift: return "offroad_drift";
  }
  return "straight_road";
}

inline std::optional<SynthTemplate> template_from_name(const std::string& name) {
  for (SynthTemplate t : kAllTemplates)
    if (name == to_string(t)) return t;
  return std::nullopt;
}

struct SynthSpec {
  SynthTemplate tmpl = SynthTemplate::StraightRoad;
  std::size_t agent_count = 2;
  std::uint64_t seed = 0;
  double noise_level = 0.0;
};

// Expected logged-future features, per object and metric, for the metrics a
// template can state in closed form.
struct SynthFixture {
  std::string scenario_id;
  std::map<ObjectId, std::map<MetricKind, FeatureSeries>> expected;
};

struct SynthOutput {
  Scenario scenario;
  SynthFixture fixture;
};

namespace synth_detail {

// Constant acceleration along the heading (yaw_rate == 0), or a circular arc
// at constant speed (accel == 0).
struct Segment {
  std::size_t steps = 0;
  double accel = 0.0;
  double yaw_rate = 0.0;
};

struct AgentPlan {
  ObjectType type = ObjectType::Vehicle;
  double length = 4.5;
  double width = 2.0;
  double height = 1.5;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  std::vector<Segment> segments;
  bool collides = false;
  bool offroad = false;
  int lane = 0;  // used by the straight-road fixtures
};

struct Integrated {
  std::vector<ObjectState> states;  // H + T
  std::vector<double> step_speed;   // per transition i -> i+1
  std::vector<double> step_yaw;     // per transition
};

inline Integrated integrate(const AgentPlan& a, std::size_t total, double dt) {
  Integrated out;
  double x = a.x, y = a.y, h = a.heading, v = a.speed;
  const double z = 0.5 * a.height;
  out.states.push_back(ObjectState::at(x, y, z, h));
  std::size_t seg = 0, used = 0;
  for (std::size_t i = 0; i + 1 < total; ++i) {
    while (seg < a.segments.size() && used >= a.segments[seg].steps) {
      ++seg;
      used = 0;
    }
    const Segment s = seg < a.segments.size() ? a.segments[seg] : Segment{0, 0.0, 0.0};
    ++used;
    if (s.yaw_rate == 0.0) {
      const double d = v * dt + 0.5 * s.accel * dt * dt;
      x += d * std::cos(h);
      y += d * std::sin(h);
      out.step_speed.push_back(d / dt);
      out.step_yaw.push_back(0.0);
      v += s.accel * dt;
    } else {
      const double r = v / s.yaw_rate;
      const double h2 = h + s.yaw_rate * dt;
      x += r * (std::sin(h2) - std::sin(h));
      y += r * (std::cos(h) - std::cos(h2));
      h = h2;
      out.step_speed.push_back(2.0 * std::abs(r * std::sin(0.5 * s.yaw_rate * dt)) / dt);
      out.step_yaw.push_back(s.yaw_rate);
    }
    out.states.push_back(ObjectState::at(x, y, z, h));
  }
  return out;
}

inline MapFeature polyline_feature(std::int64_t id, MapFeatureKind kind, std::vector<Vec2> pts) {
  return {id, kind, std::move(pts)};
}

constexpr double kLaneHalf = 1.75;
constexpr double kRoadHalf = 3.5;
constexpr double kRoadStart = -400.0;
constexpr double kRoadEnd = 800.0;

// Two eastbound lanes (y = -1.75 and y = +1.75) between edges at y = +-3.5.
// Edges run so that the road lies on their right.
inline std::vector<MapFeature> straight_road_map() {
  return {
      polyline_feature(0, MapFeatureKind::RoadEdge, {{kRoadStart, kRoadHalf}, {kRoadEnd, kRoadHalf}}),
      polyline_feature(1, MapFeatureKind::RoadEdge, {{kRoadEnd, -kRoadHalf}, {kRoadStart, -kRoadHalf}}),
      polyline_feature(2, MapFeatureKind::LaneCenter, {{kRoadStart, -kLaneHalf}, {kRoadEnd, -kLaneHalf}}),
      polyline_feature(3, MapFeatureKind::LaneCenter, {{kRoadStart, kLaneHalf}, {kRoadEnd, kLaneHalf}}),
  };
}

inline double lane_y(int lane) { return lane == 0 ? -kLaneHalf : kLaneHalf; }

inline AgentPlan vehicle(double x, int lane, double speed, std::vector<Segment> segs = {}) {
  AgentPlan a;
  a.x = x;
  a.y = lane_y(lane);
  a.lane = lane;
  a.speed = speed;
  a.segments = std::move(segs);
  return a;
}

inline AgentPlan pedestrian(double x, double y, double heading, double speed) {
  AgentPlan a;
  a.type = ObjectType::Pedestrian;
  a.length = 0.8;
  a.width = 0.8;
  a.height = 1.8;
  a.x = x;
  a.y = y;
  a.heading = heading;
  a.speed = speed;
  a.offroad = true;
  return a;
}

inline void make_cyclist(AgentPlan& a) {
  a.type = ObjectType::Cyclist;
  a.length = 1.8;
  a.width = 0.6;
  a.height = 1.7;
}

struct Layout {
  std::vector<AgentPlan> agents;
  std::vector<MapFeature> map;
  bool axis_aligned = false;  // every agent keeps heading 0 on the straight road
};

inline Layout straight_road(std::size_t n, std::mt19937_64& rng, double noise) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double v0 = 10.0 * (1.0 + 0.1 * noise * u(rng));
  const double v1 = 8.0 * (1.0 + 0.1 * noise * u(rng));
  Layout out{{}, straight_road_map(), true};
  for (std::size_t i = 0; i < n; ++i) {
    const int lane = static_cast<int>(i % 2);
    const double rank = static_cast<double>(i / 2);
    AgentPlan a = lane == 0 ? vehicle(-25.0 * rank, 0, v0)
                            : vehicle(-12.5 - 25.0 * rank, 1, v1, {{30, 0.0, 0.0}, {30, 0.5, 0.0}});
    if (i >= 3 && i % 3 == 0) make_cyclist(a);
    out.agents.push_back(a);
  }
  return out;
}

inline Layout following_pair(std::size_t n, std::mt19937_64& rng, double noise) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Layout out{{}, straight_road_map(), true};
  for (std::size_t p = 0; 2 * p < n; ++p) {
    const int lane = static_cast<int>(p % 2);
    const double base = -80.0 * static_cast<double>(p / 2) + (lane == 1 ? 10.0 : 0.0);
    const double v = 10.0 * (1.0 + 0.05 * noise * u(rng));
    out.agents.push_back(vehicle(base - 20.0, lane, v, {{40, 0.0, 0.0}, {10, -3.0, 0.0}}));
    if (2 * p + 1 < n) out.agents.push_back(vehicle(base, lane, v, {{30, 0.0, 0.0}, {10, -3.0, 0.0}}));
  }
  return out;
}

inline Layout collision_course(std::size_t n, std::mt19937_64& rng, double noise) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Layout out{{}, straight_road_map(), true};
  // Leader stops hard in front of a follower that keeps its speed.
  AgentPlan follower = vehicle(0.0, 0, 10.0);
  AgentPlan leader = vehicle(14.5, 0, 10.0, {{15, 0.0, 0.0}, {20, -5.0, 0.0}});
  follower.collides = leader.collides = true;
  out.agents.push_back(follower);
  out.agents.push_back(leader);
  const double v = 10.0 * (1.0 + 0.1 * noise * u(rng));
  for (std::size_t i = 2; i < n; ++i) out.agents.push_back(vehicle(5.0 - 25.0 * static_cast<double>(i - 2), 1, v));
  return out;
}

inline Layout offroad_drift(std::size_t n, std::mt19937_64& rng, double noise) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Layout out{{}, straight_road_map(), false};
  AgentPlan drifter = vehicle(0.0, 0, 10.0, {{30, 0.0, 0.0}, {10, 0.0, -0.2 * (1.0 + 0.2 * noise * u(rng))}});
  drifter.offroad = true;
  out.agents.push_back(drifter);
  const double v = 10.0 * (1.0 + 0.1 * noise * u(rng));
  for (std::size_t i = 1; i < n; ++i) {
    const int lane = static_cast<int>(i % 2);
    const double rank = static_cast<double>((i + 1) / 2);
    out.agents.push_back(lane == 1 ? vehicle(-10.0 - 25.0 * (rank - 1.0), 1, v) : vehicle(-25.0 * rank, 0, 10.0));
  }
  return out;
}

// Two CCW lanes of radius 50 (outer) and 46.5 (inner) around (0, 50).
inline Layout curved_road(std::size_t n, std::mt19937_64& rng, double noise) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  constexpr double pi = std::numbers::pi;
  const Vec2 center{0.0, 50.0};
  const std::array<double, 2> radius = {50.0, 46.5};
  const std::array<double, 2> speed = {10.0 * (1.0 + 0.1 * noise * u(rng)), 9.0 * (1.0 + 0.1 * noise * u(rng))};
  const double inner_edge = 46.5 - kLaneHalf;
  const double outer_edge = 50.0 + kLaneHalf;

  Layout out;
  constexpr int kSegments = 720;
  std::vector<Vec2> inner, outer;
  for (int k = 0; k <= kSegments; ++k) {
    const double a = 2.0 * pi * k / kSegments;
    inner.push_back(center + inner_edge * Vec2{std::cos(a), std::sin(a)});   // CCW: road outside
    outer.push_back(center + outer_edge * Vec2{std::cos(-a), std::sin(-a)});  // CW: road inside
  }
  inner.back() = inner.front();
  outer.back() = outer.front();
  out.map.push_back(polyline_feature(0, MapFeatureKind::RoadEdge, std::move(inner)));
  out.map.push_back(polyline_feature(1, MapFeatureKind::RoadEdge, std::move(outer)));
  for (std::size_t lane = 0; lane < radius.size(); ++lane) {
    std::vector<Vec2> pts;
    for (int k = 0; k < kSegments; ++k) {
      const double a = 2.0 * pi * k / kSegments;
      pts.push_back(center + radius[lane] * Vec2{std::cos(a), std::sin(a)});
    }
    pts.push_back(pts.front());
    out.map.push_back(polyline_feature(2 + static_cast<std::int64_t>(lane), MapFeatureKind::LaneCenter, std::move(pts)));
  }

  const std::size_t ranks = (n + 1) / 2;
  const double spacing = std::min(0.5, 2.0 * pi / static_cast<double>(std::max<std::size_t>(ranks, 1)));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lane = i % 2;
    const double phi = -pi / 2.0 - spacing * static_cast<double>(i / 2) - (lane == 1 ? 0.5 * spacing : 0.0);
    AgentPlan a;
    a.x = center.x + radius[lane] * std::cos(phi);
    a.y = center.y + radius[lane] * std::sin(phi);
    a.heading = phi + pi / 2.0;
    a.speed = speed[lane];
    a.segments = {{1000, 0.0, speed[lane] / radius[lane]}};
    out.agents.push_back(a);
  }
  return out;
}

// Four arms of half-width 5 meeting at the origin; lanes at +-2.5.
inline Layout four_way(std::size_t n, std::mt19937_64& rng, double noise) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  constexpr double pi = std::numbers::pi;
  constexpr double W = 5.0;
  constexpr double L = 300.0;
  constexpr double lane = 2.5;
  Layout out;
  const std::vector<Vec2> ne = {{W, L}, {W, W}, {L, W}};
  for (int q = 0; q < 4; ++q) {
    std::vector<Vec2> pts;
    for (Vec2 p : ne) pts.push_back(rotate(p, q * pi / 2.0));
    out.map.push_back(polyline_feature(q, MapFeatureKind::RoadEdge, std::move(pts)));
  }
  // eastbound lane, then the same rotated for north-, west- and southbound
  for (int q = 0; q < 4; ++q)
    out.map.push_back(polyline_feature(4 + q, MapFeatureKind::LaneCenter,
                                       {rotate({-L, -lane}, q * pi / 2.0), rotate({L, -lane}, q * pi / 2.0)}));

  const double dt = kDefaultTimestep;
  for (std::size_t i = 0; i < n; ++i) {
    AgentPlan a;
    switch (i) {
      case 0:  // eastbound, straight through
        a.x = -30.0 + 2.0 * noise * u(rng);
        a.y = -lane;
        a.speed = 10.0;
        break;
      case 1: {  // westbound, left turn onto the southbound lane over 10 steps
        const double omega = (pi / 2.0) / (10.0 * dt);
        const double v = 8.0;
        const double r = v / omega;
        const double turn_x = r - lane;
        a.x = turn_x + v * dt * 45.0;
        a.y = lane;
        a.heading = pi;
        a.speed = v;
        a.segments = {{45, 0.0, 0.0}, {10, 0.0, omega}};
        break;
      }
      case 2:  // northbound, straight through after the others cleared
        a.x = lane;
        a.y = -70.0 + 2.0 * noise * u(rng);
        a.heading = pi / 2.0;
        a.speed = 10.0;
        break;
      case 3:  // southbound, brakes to a stop short of the junction
        a.x = -lane;
        a.y = 50.0;
        a.heading = 3.0 * pi / 2.0;
        a.speed = 10.0;
        a.segments = {{20, 0.0, 0.0}, {40, -2.5, 0.0}};
        break;
      default: {  // pedestrians on the north-east sidewalk
        const std::size_t k = i - 4;
        a = pedestrian(12.0 + 3.0 * static_cast<double>(k % 5), 8.0 + 2.0 * static_cast<double>(k / 5), 0.0,
                       1.4 * (1.0 + 0.1 * noise * u(rng)));
        break;
      }
    }
    out.agents.push_back(a);
  }
  return out;
}

inline FeatureSeries series(ObjectId id, MetricKind m, std::size_t n) {
  return {id, m, std::vector<double>(n, 0.0), std::vector<bool>(n, false)};
}

inline FeatureSeries constant_event(ObjectId id, MetricKind m, std::size_t n, bool value) {
  return {id, m, std::vector<double>(n, value ? 1.0 : 0.0), std::vector<bool>(n, true)};
}

}  // namespace synth_detail

inline SynthOutput generate(const SynthSpec& spec) {
  using namespace synth_detail;
  if (spec.agent_count < 1 || spec.agent_count > kMaxSimulatedObjects)
    throw Error(ErrorCode::InvalidArgument, "agent_count must be in [1, 128]");
  if ((spec.tmpl == SynthTemplate::FollowingPair || spec.tmpl == SynthTemplate::CollisionCourse) &&
      spec.agent_count < 2)
    throw Error(ErrorCode::InvalidArgument, std::string(to_string(spec.tmpl)) + " needs >= 2 agents");

  std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(spec.tmpl) + 1);
  const double noise = spec.noise_level;
  Layout layout;
  switch (spec.tmpl) {
    case SynthTemplate::StraightRoad: layout = straight_road(spec.agent_count, rng, noise); break;
    case SynthTemplate::CurvedRoad: layout = curved_road(spec.agent_count, rng, noise); break;
    case SynthTemplate::FourWayIntersection: layout = four_way(spec.agent_count, rng, noise); break;
    case SynthTemplate::FollowingPair: layout = following_pair(spec.agent_count, rng, noise); break;
    case SynthTemplate::CollisionCourse: layout = collision_course(spec.agent_count, rng, noise); break;
    case SynthTemplate::OffroadDrift: layout = offroad_drift(spec.agent_count, rng, noise); break;
  }

  SynthOutput out;
  Scenario& s = out.scenario;
  s.scenario_id = std::string(to_string(spec.tmpl)) + "-" + std::to_string(spec.seed) + "-" +
                  std::to_string(spec.agent_count);
  s.map = layout.map;
  s.av_track_id = 0;
  out.fixture.scenario_id = s.scenario_id;

  const std::size_t total = s.total_steps();
  const std::size_t T = s.future_length;
  const std::size_t H = s.history_length;
  const double dt = s.timestep;
  std::vector<Integrated> motion;
  for (std::size_t i = 0; i < layout.agents.size(); ++i) {
    const AgentPlan& a = layout.agents[i];
    motion.push_back(integrate(a, total, dt));
    s.tracks.push_back({static_cast<ObjectId>(i), a.type, a.length, a.width, a.height, motion.back().states});
  }

  // Kinematics: future step j >= 1 covers transition H + j - 1.
  for (std::size_t i = 0; i < layout.agents.size(); ++i) {
    const auto id = static_cast<ObjectId>(i);
    const Integrated& m = motion[i];
    auto speed = series(id, MetricKind::LinearSpeed, T);
    auto accel = series(id, MetricKind::LinearAccelMag, T);
    auto omega = series(id, MetricKind::AngularSpeed, T);
    auto alpha = series(id, MetricKind::AngularAccelMag, T);
    for (std::size_t j = 1; j < T; ++j) {
      speed.values[j] = m.step_speed[H + j - 1];
      omega.values[j] = m.step_yaw[H + j - 1];
      speed.valid[j] = omega.valid[j] = true;
      if (j >= 2) {
        accel.values[j] = (m.step_speed[H + j - 1] - m.step_speed[H + j - 2]) / dt;
        alpha.values[j] = (m.step_yaw[H + j - 1] - m.step_yaw[H + j - 2]) / dt;
        accel.valid[j] = alpha.valid[j] = true;
      }
    }
    auto& e = out.fixture.expected[id];
    e[MetricKind::LinearSpeed] = std::move(speed);
    e[MetricKind::LinearAccelMag] = std::move(accel);
    e[MetricKind::AngularSpeed] = std::move(omega);
    e[MetricKind::AngularAccelMag] = std::move(alpha);
    e[MetricKind::CollisionIndication] = constant_event(id, MetricKind::CollisionIndication, T, layout.agents[i].collides);
    e[MetricKind::OffroadIndication] = constant_event(id, MetricKind::OffroadIndication, T, layout.agents[i].offroad);
  }

  // Axis-aligned straight-road layouts: interaction and road-edge features in
  // closed form from box extents and lane membership.
  if (layout.axis_aligned) {
    const TtcParams ttc;
    for (std::size_t i = 0; i < layout.agents.size(); ++i) {
      const auto id = static_cast<ObjectId>(i);
      const AgentPlan& a = layout.agents[i];
      auto nearest = series(id, MetricKind::DistToNearestObject, T);
      auto road = series(id, MetricKind::DistToRoadEdge, T);
      auto ttc_series = series(id, MetricKind::TimeToCollision, T);
      for (std::size_t j = 0; j < T; ++j) {
        const ObjectState& sa = motion[i].states[H + j];
        double best = std::numeric_limits<double>::infinity();
        double lead_dx = std::numeric_limits<double>::infinity();
        std::size_t leader = layout.agents.size();
        for (std::size_t k = 0; k < layout.agents.size(); ++k) {
          if (k == i) continue;
          const AgentPlan& b = layout.agents[k];
          const ObjectState& sb = motion[k].states[H + j];
          const double gx = std::abs(sb.x - sa.x) - 0.5 * (a.length + b.length);
          const double gy = std::abs(sb.y - sa.y) - 0.5 * (a.width + b.width);
          best = std::min(best, (gx > 0.0 && gy > 0.0) ? std::hypot(gx, gy) : std::max(gx, gy));
          const double dx = sb.x - sa.x;
          if (dx > 0.0 && std::abs(sb.y - sa.y) <= std::max(ttc.min_lateral_threshold, 0.5 * (a.width + b.width)) &&
              dx < lead_dx) {
            lead_dx = dx;
            leader = k;
          }
        }
        if (layout.agents.size() > 1) {
          nearest.values[j] = std::abs(best) < kGeomEps ? 0.0 : best;
          nearest.valid[j] = true;
        }
        double worst = -std::numeric_limits<double>::infinity();
        for (double dy : {-0.5 * a.width, 0.5 * a.width}) {
          const double yc = sa.y + dy;
          worst = std::max(worst, std::max(yc - kRoadHalf, -kRoadHalf - yc));
        }
        road.values[j] = worst;
        road.valid[j] = true;
        if (j >= 1) {
          double value = ttc.ttc_max;
          const double vf = motion[i].step_speed[H + j - 1];
          if (leader < layout.agents.size()) {
            const double closing = vf - motion[leader].step_speed[H + j - 1];
            const double gap = lead_dx - 0.5 * (a.length + layout.agents[leader].length);
            if (closing > 0.0)
              value = std::clamp(std::max(gap, 0.0) / std::max(ttc.min_closing_speed, closing),
                                 std::numeric_limits<double>::min(), ttc.ttc_max);
          }
          ttc_series.values[j] = value;
          ttc_series.valid[j] = true;
        }
      }
      auto& e = out.fixture.expected[id];
      e[MetricKind::DistToNearestObject] = std::move(nearest);
      e[MetricKind::DistToRoadEdge] = std::move(road);
      e[MetricKind::TimeToCollision] = std::move(ttc_series);
    }
  }
  return out;
}

// `count` scenarios cycling through every template with consecutive seeds.
inline std::vector<SynthOutput> synthetic_suite(std::size_t count, std::uint64_t base_seed = 0,
                                                std::size_t agent_count = 4, double noise_level = 0.5) {
  std::vector<SynthOutput> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(generate({kAllTemplates[i % kAllTemplates.size()], agent_count, base_seed + i, noise_level}));
  return out;
}

}  // namespace simeval
