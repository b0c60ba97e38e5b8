#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simeval/errors.hpp"
#include "simeval/likelihood.hpp"
#include "simeval/metric_kind.hpp"
#include "simeval/scene.hpp"

namespace simeval {

class MetricWeights {
 public:
  // Collision and offroad weigh twice the others: 7w + 2(2w) = 1, w = 1/11.
  static MetricWeights defaults() {
    std::array<double, kNumMetrics> w;
    w.fill(1.0 / 11.0);
    w[index_of(MetricKind::CollisionIndication)] = 2.0 / 11.0;
    w[index_of(MetricKind::OffroadIndication)] = 2.0 / 11.0;
    return MetricWeights(w);
  }

  // Accepts any positive weights and rescales them to sum to one.
  static MetricWeights normalized(const std::array<double, kNumMetrics>& raw) {
    double sum = 0.0;
    for (double v : raw) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw Error(ErrorCode::InvalidArgument, "metric weights must be positive and finite");
      sum += v;
    }
    std::array<double, kNumMetrics> w;
    for (std::size_t i = 0; i < kNumMetrics; ++i) w[i] = raw[i] / sum;
    return MetricWeights(w);
  }

  double operator[](MetricKind m) const { return w_[index_of(m)]; }
  const std::array<double, kNumMetrics>& values() const { return w_; }

  double sum() const { return std::accumulate(w_.begin(), w_.end(), 0.0); }

  friend bool operator==(const MetricWeights&, const MetricWeights&) = default;

 private:
  explicit MetricWeights(const std::array<double, kNumMetrics>& w) : w_(w) {}
  std::array<double, kNumMetrics> w_;
};

enum class ObjectAggregation { LogMean, LinearMean };

using ComponentArray = std::array<std::optional<double>, kNumMetrics>;

struct MetricsBundle {
  std::string scenario_id;
  ComponentArray component;
  std::vector<MetricKind> excluded;  // unscorable for this scenario
  double composite = 0.0;
  double ade = 0.0;
  double min_ade = 0.0;
};

// m_{i,j}: the per-object estimates combined across objects, by default as
// exp of the mean log-likelihood.
inline double scenario_component(std::span<const LikelihoodEstimate> estimates,
                                 ObjectAggregation mode = ObjectAggregation::LogMean) {
  if (estimates.empty()) throw Error(ErrorCode::MetricUnscorable, "no scored objects");
  double acc = 0.0;
  for (const LikelihoodEstimate& e : estimates) acc += mode == ObjectAggregation::LogMean ? -e.nll_mean : e.value;
  acc /= static_cast<double>(estimates.size());
  return mode == ObjectAggregation::LogMean ? std::exp(acc) : acc;
}

inline double composite(const ComponentArray& components, const MetricWeights& weights) {
  double total = 0.0;
  for (MetricKind m : kAllMetrics) {
    const auto& c = components[index_of(m)];
    if (!c) throw Error(ErrorCode::IncompleteBundle, std::string(metric_name(m)) + " missing");
    total += weights[m] * *c;
  }
  return total;
}

// Weighted mean over the components that are present, with the weights of
// absent ones redistributed proportionally. Absent metrics are appended to
// `excluded`.
inline double renormalized_composite(const ComponentArray& components, const MetricWeights& weights,
                                     std::vector<MetricKind>* excluded = nullptr) {
  double total = 0.0;
  double wsum = 0.0;
  for (MetricKind m : kAllMetrics) {
    const auto& c = components[index_of(m)];
    if (!c) {
      if (excluded != nullptr) excluded->push_back(m);
      continue;
    }
    total += weights[m] * *c;
    wsum += weights[m];
  }
  if (wsum <= 0.0) throw Error(ErrorCode::IncompleteBundle, "no scorable component");
  return total / wsum;
}

inline double dataset_composite(std::span<const MetricsBundle> bundles) {
  if (bundles.empty()) throw Error(ErrorCode::InvalidArgument, "no bundles to aggregate");
  double total = 0.0;
  for (const MetricsBundle& b : bundles) total += b.composite;
  return total / static_cast<double>(bundles.size());
}

struct DisplacementErrors {
  double ade = 0.0;
  double min_ade = 0.0;
};

// Mean 2D displacement against the logged future over valid logged steps;
// min_ade takes the best single rollout.
inline DisplacementErrors displacement_errors(std::span<const JointScene> rollouts,
                                              const Scenario& logged) {
  double total = 0.0;
  std::size_t count = 0;
  double best = std::numeric_limits<double>::infinity();
  for (const JointScene& r : rollouts) {
    double rsum = 0.0;
    std::size_t rcount = 0;
    for (const auto& [id, states] : r.trajectories) {
      const Track* track = logged.find_track(id);
      if (track == nullptr) continue;
      for (std::size_t t = 0; t < logged.future_length && t < states.size(); ++t) {
        const ObjectState& truth = track->states[logged.history_length + t];
        if (!truth.valid) continue;
        rsum += norm(states[t].xy() - truth.xy());
        ++rcount;
      }
    }
    total += rsum;
    count += rcount;
    if (rcount > 0) best = std::min(best, rsum / static_cast<double>(rcount));
  }
  if (count == 0) return {};
  return {std::max(total / static_cast<double>(count), best), best};
}

inline double ade(std::span<const JointScene> rollouts, const Scenario& logged) {
  return displacement_errors(rollouts, logged).ade;
}

inline double min_ade(std::span<const JointScene> rollouts, const Scenario& logged) {
  return displacement_errors(rollouts, logged).min_ade;
}

}  // namespace simeval
