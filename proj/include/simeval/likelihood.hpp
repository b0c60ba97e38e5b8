#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "simeval/errors.hpp"
#include "simeval/features.hpp"
#include "simeval/metric_kind.hpp"

namespace simeval {

inline constexpr double kDefaultPseudocount = 0.1;

struct HistogramSpec {
  MetricKind metric = MetricKind::LinearSpeed;
  double min = 0.0;
  double max = 1.0;
  std::size_t bins = 2;
  double pseudocount = kDefaultPseudocount;

  void validate() const {
    if (!(max > min) || !std::isfinite(min) || !std::isfinite(max))
      throw Error(ErrorCode::InvalidArgument, std::string(metric_name(metric)) + ": max must exceed min");
    if (bins < 2)
      throw Error(ErrorCode::InvalidArgument, std::string(metric_name(metric)) + ": need >= 2 bins");
    if (!(pseudocount > 0.0))
      throw Error(ErrorCode::InvalidArgument, std::string(metric_name(metric)) + ": pseudocount must be > 0");
  }

  // Uniform bins; values outside [min, max] land in the boundary bins.
  std::size_t bin_of(double v) const {
    if (!(v > min)) return 0;  // also catches NaN
    if (v >= max) return bins - 1;
    const auto b = static_cast<std::size_t>((v - min) / (max - min) * static_cast<double>(bins));
    return std::min(b, bins - 1);
  }

  friend bool operator==(const HistogramSpec&, const HistogramSpec&) = default;
};

// Event metrics use a two-bin spec over {0, 1}: bin 0 is false, bin 1 true.
inline HistogramSpec bernoulli_spec(MetricKind metric, double pseudocount = kDefaultPseudocount) {
  return {metric, 0.0, 1.0, 2, pseudocount};
}

inline std::array<HistogramSpec, kNumMetrics> default_histogram_specs() {
  constexpr double pi = std::numbers::pi;
  return {{
      {MetricKind::LinearSpeed, 0.0, 30.0, 128, kDefaultPseudocount},
      {MetricKind::LinearAccelMag, -6.0, 6.0, 128, kDefaultPseudocount},
      {MetricKind::AngularSpeed, -pi, pi, 128, kDefaultPseudocount},
      {MetricKind::AngularAccelMag, -4.0, 4.0, 128, kDefaultPseudocount},
      {MetricKind::DistToNearestObject, -2.0, 40.0, 128, kDefaultPseudocount},
      bernoulli_spec(MetricKind::CollisionIndication),
      {MetricKind::TimeToCollision, 0.0, 5.0, 128, kDefaultPseudocount},
      {MetricKind::DistToRoadEdge, -5.0, 5.0, 128, kDefaultPseudocount},
      bernoulli_spec(MetricKind::OffroadIndication),
  }};
}

struct FittedDistribution {
  HistogramSpec spec;
  std::vector<double> probabilities;
  std::size_t sample_count = 0;

  double probability_of(double v) const { return probabilities[spec.bin_of(v)]; }
};

// p_i = (c_i + a) / (n + B a)
inline FittedDistribution fit_histogram(std::span<const double> samples, const HistogramSpec& spec) {
  spec.validate();
  if (samples.empty())
    throw Error(ErrorCode::EmptySampleSet, std::string(metric_name(spec.metric)));
  std::vector<double> counts(spec.bins, 0.0);
  for (double v : samples) counts[spec.bin_of(v)] += 1.0;
  const double denom =
      static_cast<double>(samples.size()) + static_cast<double>(spec.bins) * spec.pseudocount;
  FittedDistribution out{spec, std::vector<double>(spec.bins), samples.size()};
  for (std::size_t i = 0; i < spec.bins; ++i) out.probabilities[i] = (counts[i] + spec.pseudocount) / denom;
  return out;
}

inline FittedDistribution fit_bernoulli(const std::vector<bool>& samples,
                                        double pseudocount = kDefaultPseudocount,
                                        MetricKind metric = MetricKind::CollisionIndication) {
  std::vector<double> as_values;
  as_values.reserve(samples.size());
  for (bool b : samples) as_values.push_back(b ? 1.0 : 0.0);
  return fit_histogram(as_values, bernoulli_spec(metric, pseudocount));
}

struct LikelihoodEstimate {
  MetricKind metric = MetricKind::LinearSpeed;
  double value = 1.0;     // exp(-nll_mean)
  double nll_mean = 0.0;
  std::size_t valid_steps = 0;
};

// Validity-masked mean of per-step NLLs under the fitted distribution.
inline LikelihoodEstimate time_series_likelihood(const FeatureSeries& logged,
                                                 const FittedDistribution& dist) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < logged.values.size(); ++t) {
    if (!logged.valid[t]) continue;
    total += -std::log(dist.probability_of(logged.values[t]));
    ++count;
  }
  if (count == 0)
    throw Error(ErrorCode::NoValidSteps, "object " + std::to_string(logged.object_id) + " " +
                                             std::string(metric_name(logged.metric)));
  const double mean = total / static_cast<double>(count);
  return {dist.spec.metric, std::exp(-mean), mean, count};
}

// Features of every rollout, keyed by object id; index k is rollout k.
using RolloutFeatures = std::vector<std::map<ObjectId, ObjectFeatures>>;

// Simulated samples for one object and metric, pooled over rollouts and
// valid steps. Event metrics contribute one sample per rollout.
inline std::vector<double> pool_simulated_samples(const RolloutFeatures& rollouts, ObjectId id,
                                                  MetricKind metric) {
  std::vector<double> out;
  for (std::size_t k = 0; k < rollouts.size(); ++k) {
    auto it = rollouts[k].find(id);
    if (it == rollouts[k].end())
      throw Error(ErrorCode::InconsistentRollouts,
                  "object " + std::to_string(id) + " missing from rollout " + std::to_string(k));
    const FeatureSeries& s = it->second[index_of(metric)];
    if (is_event_metric(metric)) {
      auto first = std::find(s.valid.begin(), s.valid.end(), true);
      if (first != s.valid.end()) out.push_back(s.values[static_cast<std::size_t>(first - s.valid.begin())]);
      continue;
    }
    for (std::size_t t = 0; t < s.values.size(); ++t)
      if (s.valid[t]) out.push_back(s.values[t]);
  }
  return out;
}

}  // namespace simeval
