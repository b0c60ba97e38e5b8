#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "simeval/errors.hpp"
#include "simeval/geometry.hpp"

namespace simeval {

using ObjectId = std::int64_t;

inline constexpr std::size_t kDefaultHistoryLength = 11;
inline constexpr std::size_t kDefaultFutureLength = 80;
inline constexpr double kDefaultTimestep = 0.1;
inline constexpr std::size_t kMaxSimulatedObjects = 128;
inline constexpr std::size_t kRolloutsPerScenario = 32;

enum class ObjectType { Vehicle, Pedestrian, Cyclist };

struct ObjectState {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double heading = 0.0;  // [0, 2pi)
  bool valid = false;

  static ObjectState at(double x, double y, double z, double heading) {
    return {x, y, z, normalize_heading(heading), true};
  }
  static ObjectState invalid() { return {}; }

  Vec2 xy() const { return {x, y}; }

  friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

struct Track {
  ObjectId object_id = 0;
  ObjectType object_type = ObjectType::Vehicle;
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;
  std::vector<ObjectState> states;  // history then future, H + T entries

  OrientedBox2D box_at(const ObjectState& s) const {
    return {s.xy(), s.heading, length, width};
  }

  friend bool operator==(const Track&, const Track&) = default;
};

enum class MapFeatureKind { RoadEdge, LaneCenter, Other };

struct MapFeature {
  std::int64_t feature_id = 0;
  MapFeatureKind kind = MapFeatureKind::Other;
  std::vector<Vec2> polyline;

  friend bool operator==(const MapFeature&, const MapFeature&) = default;
};

// A logged scenario. Relative time index t in [-H+1, T] lives at array index
// t + H - 1: the history occupies [0, H) and t = 0 is index H - 1.
struct Scenario {
  std::string scenario_id;
  double timestep = kDefaultTimestep;
  std::size_t history_length = kDefaultHistoryLength;
  std::size_t future_length = kDefaultFutureLength;
  std::vector<Track> tracks;
  std::vector<MapFeature> map;
  ObjectId av_track_id = 0;

  std::size_t total_steps() const { return history_length + future_length; }
  std::size_t current_index() const { return history_length - 1; }

  const Track* find_track(ObjectId id) const {
    auto it = std::find_if(tracks.begin(), tracks.end(),
                           [id](const Track& t) { return t.object_id == id; });
    return it == tracks.end() ? nullptr : &*it;
  }

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

// One simulated future: T states per simulated object.
struct JointScene {
  std::string scenario_id;
  std::map<ObjectId, std::vector<ObjectState>> trajectories;

  friend bool operator==(const JointScene&, const JointScene&) = default;
};

struct ScenarioRollouts {
  std::string scenario_id;
  std::vector<JointScene> rollouts;

  friend bool operator==(const ScenarioRollouts&, const ScenarioRollouts&) = default;
};

inline const char* to_string(ObjectType t) {
  switch (t) {
    case ObjectType::Vehicle: return "vehicle";
    case ObjectType::Pedestrian: return "pedestrian";
    case ObjectType::Cyclist: return "cyclist";
  }
  return "vehicle";
}

inline const char* to_string(MapFeatureKind k) {
  switch (k) {
    case MapFeatureKind::RoadEdge: return "road_edge";
    case MapFeatureKind::LaneCenter: return "lane_center";
    case MapFeatureKind::Other: return "other";
  }
  return "other";
}

// Throws MalformedScenario on any structural violation.
inline void validate_scenario(const Scenario& s) {
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::MalformedScenario, s.scenario_id + ": " + msg);
  };
  if (s.history_length < 1) fail("history_length must be >= 1");
  if (s.future_length < 1) fail("future_length must be >= 1");
  if (!(s.timestep > 0.0) || !std::isfinite(s.timestep)) fail("timestep must be positive");
  std::set<ObjectId> ids;
  bool has_av = false;
  for (const Track& t : s.tracks) {
    if (!ids.insert(t.object_id).second)
      fail("duplicate object_id " + std::to_string(t.object_id));
    if (!(t.length > 0.0 && t.width > 0.0 && t.height > 0.0))
      fail("non-positive extents on object " + std::to_string(t.object_id));
    if (t.states.size() != s.total_steps())
      fail("object " + std::to_string(t.object_id) + " has " + std::to_string(t.states.size()) +
           " states, expected " + std::to_string(s.total_steps()));
    for (const ObjectState& st : t.states) {
      if (!st.valid) continue;
      if (!std::isfinite(st.x) || !std::isfinite(st.y) || !std::isfinite(st.z) ||
          !std::isfinite(st.heading))
        fail("non-finite state on object " + std::to_string(t.object_id));
      if (st.heading < 0.0 || st.heading >= kTwoPi)
        fail("heading not normalized on object " + std::to_string(t.object_id));
    }
    if (t.object_id == s.av_track_id) has_av = true;
  }
  if (!has_av) fail("AV track " + std::to_string(s.av_track_id) + " missing");
  for (const MapFeature& f : s.map) {
    if (f.polyline.size() < 2) fail("map feature " + std::to_string(f.feature_id) + " has < 2 points");
    for (std::size_t i = 0; i + 1 < f.polyline.size(); ++i)
      if (f.polyline[i] == f.polyline[i + 1])
        fail("map feature " + std::to_string(f.feature_id) + " repeats a point");
  }
}

// Objects that must be simulated: every track valid at t = 0.
inline std::set<ObjectId> simulated_object_ids(const Scenario& s) {
  const std::size_t now = s.current_index();
  std::set<ObjectId> ids;
  bool av_valid = false;
  for (const Track& t : s.tracks) {
    if (now < t.states.size() && t.states[now].valid) {
      ids.insert(t.object_id);
      if (t.object_id == s.av_track_id) av_valid = true;
    }
  }
  if (!av_valid)
    throw Error(ErrorCode::MalformedScenario,
                s.scenario_id + ": AV track " + std::to_string(s.av_track_id) + " invalid at t=0");
  if (ids.size() > kMaxSimulatedObjects)
    throw Error(ErrorCode::MalformedScenario,
                s.scenario_id + ": " + std::to_string(ids.size()) + " objects valid at t=0 (max " +
                    std::to_string(kMaxSimulatedObjects) + ")");
  return ids;
}

// Drops objects with no valid state in the history window.
inline Scenario strip_late_spawns(const Scenario& s) {
  Scenario out = s;
  const auto hist = static_cast<std::ptrdiff_t>(s.history_length);
  std::erase_if(out.tracks, [hist](const Track& t) {
    const auto end = t.states.begin() + std::min<std::ptrdiff_t>(hist, std::ssize(t.states));
    return std::none_of(t.states.begin(), end, [](const ObjectState& st) { return st.valid; });
  });
  return out;
}

// The logged future of a track (indices H .. H+T-1).
inline std::vector<ObjectState> logged_future(const Scenario& s, const Track& t) {
  const auto first = t.states.begin() + static_cast<std::ptrdiff_t>(s.history_length);
  return {first, first + static_cast<std::ptrdiff_t>(s.future_length)};
}

}  // namespace simeval
