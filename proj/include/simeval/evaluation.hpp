#pragma once

#include <array>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "simeval/aggregation.hpp"
#include "simeval/features.hpp"
#include "simeval/likelihood.hpp"
#include "simeval/scene.hpp"

namespace simeval {

enum class HistogramScope { PerObject, PerScenario };

// Every parameter the scoring depends on; serialized into each report.
struct EvalConfig {
  int version = 1;
  MetricWeights weights = MetricWeights::defaults();
  std::array<HistogramSpec, kNumMetrics> histograms = default_histogram_specs();
  TtcParams ttc;
  HistogramScope histogram_scope = HistogramScope::PerObject;
  ObjectAggregation object_aggregation = ObjectAggregation::LogMean;
};

struct ObjectEstimates {
  ObjectId object_id = 0;
  std::array<std::optional<LikelihoodEstimate>, kNumMetrics> estimates;
};

struct ScenarioEvaluation {
  MetricsBundle bundle;
  std::vector<ObjectEstimates> objects;
};

inline RolloutFeatures rollout_features(const Scenario& scenario,
                                        std::span<const JointScene> rollouts,
                                        const EvalConfig& config = {}) {
  RolloutFeatures out;
  out.reserve(rollouts.size());
  for (const JointScene& r : rollouts)
    out.push_back(compute_features(rollout_feature_scene(scenario, r), scenario.map, config.ttc));
  return out;
}

// Scores the logged future of `scenario` under the distribution of the
// submitted rollouts.
inline ScenarioEvaluation evaluate_scenario(const Scenario& scenario, const ScenarioRollouts& submission,
                                            const EvalConfig& config = {}) {
  if (submission.rollouts.empty())
    throw Error(ErrorCode::InconsistentRollouts, scenario.scenario_id + ": no rollouts");
  const Scenario logged = strip_late_spawns(scenario);
  const std::set<ObjectId> ids = simulated_object_ids(logged);
  for (std::size_t k = 0; k < submission.rollouts.size(); ++k)
    for (ObjectId id : ids)
      if (!submission.rollouts[k].trajectories.contains(id))
        throw Error(ErrorCode::InconsistentRollouts, scenario.scenario_id + ": object " +
                                                         std::to_string(id) + " missing from rollout " +
                                                         std::to_string(k));

  const auto logged_features =
      compute_features(logged_feature_scene(logged), logged.map, config.ttc, ids);
  const RolloutFeatures simulated = rollout_features(logged, submission.rollouts, config);

  std::array<std::vector<double>, kNumMetrics> scenario_pool;
  if (config.histogram_scope == HistogramScope::PerScenario)
    for (MetricKind m : kAllMetrics)
      for (ObjectId id : ids) {
        auto s = pool_simulated_samples(simulated, id, m);
        scenario_pool[index_of(m)].insert(scenario_pool[index_of(m)].end(), s.begin(), s.end());
      }

  ScenarioEvaluation out;
  out.bundle.scenario_id = scenario.scenario_id;
  std::array<std::vector<LikelihoodEstimate>, kNumMetrics> per_metric;
  for (ObjectId id : ids) {
    ObjectEstimates obj{id, {}};
    for (MetricKind m : kAllMetrics) {
      const FeatureSeries& truth = logged_features.at(id)[index_of(m)];
      if (truth.valid_count() == 0) continue;  // NoValidSteps: dropped
      std::vector<double> pooled = config.histogram_scope == HistogramScope::PerScenario
                                       ? scenario_pool[index_of(m)]
                                       : pool_simulated_samples(simulated, id, m);
      if (pooled.empty()) continue;
      const FittedDistribution dist = fit_histogram(pooled, config.histograms[index_of(m)]);
      const LikelihoodEstimate e = time_series_likelihood(truth, dist);
      obj.estimates[index_of(m)] = e;
      per_metric[index_of(m)].push_back(e);
    }
    out.objects.push_back(std::move(obj));
  }

  for (MetricKind m : kAllMetrics)
    if (!per_metric[index_of(m)].empty())
      out.bundle.component[index_of(m)] = scenario_component(per_metric[index_of(m)], config.object_aggregation);
  out.bundle.composite = renormalized_composite(out.bundle.component, config.weights, &out.bundle.excluded);
  const DisplacementErrors de = displacement_errors(submission.rollouts, logged);
  out.bundle.ade = de.ade;
  out.bundle.min_ade = de.min_ade;
  return out;
}

}  // namespace simeval
