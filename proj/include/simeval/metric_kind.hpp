#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace simeval {

enum class MetricKind : std::size_t {
  LinearSpeed,
  LinearAccelMag,
  AngularSpeed,
  AngularAccelMag,
  DistToNearestObject,
  CollisionIndication,
  TimeToCollision,
  DistToRoadEdge,
  OffroadIndication,
};

inline constexpr std::size_t kNumMetrics = 9;

inline constexpr std::array<MetricKind, kNumMetrics> kAllMetrics = {
    MetricKind::LinearSpeed,         MetricKind::LinearAccelMag,
    MetricKind::AngularSpeed,        MetricKind::AngularAccelMag,
    MetricKind::DistToNearestObject, MetricKind::CollisionIndication,
    MetricKind::TimeToCollision,     MetricKind::DistToRoadEdge,
    MetricKind::OffroadIndication,
};

inline constexpr std::size_t index_of(MetricKind m) { return static_cast<std::size_t>(m); }

// Event metrics are scored as one Bernoulli sample per object per rollout.
inline constexpr bool is_event_metric(MetricKind m) {
  return m == MetricKind::CollisionIndication || m == MetricKind::OffroadIndication;
}

inline constexpr std::string_view metric_name(MetricKind m) {
  constexpr std::array<std::string_view, kNumMetrics> names = {
      "linear_speed",
      "linear_acceleration",
      "angular_speed",
      "angular_acceleration",
      "distance_to_nearest_object",
      "collision_indication",
      "time_to_collision",
      "distance_to_road_edge",
      "offroad_indication",
  };
  return names[index_of(m)];
}

inline std::optional<MetricKind> metric_from_name(std::string_view name) {
  for (MetricKind m : kAllMetrics)
    if (metric_name(m) == name) return m;
  return std::nullopt;
}

}  // namespace simeval
