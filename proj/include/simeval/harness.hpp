#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "simeval/errors.hpp"
#include "simeval/geometry.hpp"
#include "simeval/scene.hpp"

namespace simeval {

// ---------------------------------------------------------------------------
// Randomness. Every draw comes from a stream keyed by
// (seed, rollout, step, object), so results do not depend on call order or
// on how rollouts are scheduled across threads.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t rollout, std::uint64_t step,
                                ObjectId object) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ rollout);
  k = splitmix64(k ^ step);
  return splitmix64(k ^ static_cast<std::uint64_t>(object));
}

class KeyedRng {
 public:
  explicit KeyedRng(std::uint64_t key) : engine_(key) {}

  double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Context handed to policies.

struct ObjectInfo {
  ObjectId id = 0;
  ObjectType type = ObjectType::Vehicle;
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;
};

// Static per-rollout data shared by every step.
struct RolloutSetup {
  std::span<const MapFeature> map;
  std::map<ObjectId, ObjectInfo> objects;
  ObjectId av_id = 0;
  double timestep = kDefaultTimestep;
  std::size_t history_length = kDefaultHistoryLength;
  std::size_t future_length = kDefaultFutureLength;
  std::uint64_t seed = 0;
  std::uint64_t rollout_index = 0;
};

// Observed states per object: the logged history followed by simulated
// outputs. The rollout engine only ever stores what has been observed.
using ObservationBuffer = std::map<ObjectId, std::vector<ObjectState>>;

// Read-only view of everything observed before step t: the map, an empty
// traffic-signal channel, the history, and outputs of steps 1..t-1.
class PolicyContext {
 public:
  PolicyContext(const RolloutSetup& setup, const ObservationBuffer& observed, std::size_t step)
      : setup_(&setup), observed_(&observed), step_(step) {}

  std::size_t step() const { return step_; }
  std::span<const MapFeature> map() const { return setup_->map; }
  std::span<const ObjectState> traffic_signals() const { return {}; }
  ObjectId av_id() const { return setup_->av_id; }
  double timestep() const { return setup_->timestep; }
  std::size_t history_length() const { return setup_->history_length; }
  std::size_t future_length() const { return setup_->future_length; }
  const std::map<ObjectId, ObjectInfo>& objects() const { return setup_->objects; }
  const ObjectInfo& info(ObjectId id) const { return setup_->objects.at(id); }

  // Observations with relative time < t, oldest first.
  std::span<const ObjectState> history(ObjectId id) const {
    auto it = observed_->find(id);
    if (it == observed_->end()) return {};
    const std::size_t visible = setup_->history_length + step_ - 1;
    return std::span<const ObjectState>(it->second).first(std::min(visible, it->second.size()));
  }

  KeyedRng rng(ObjectId id) const { return rng(id, step_); }

  // A stream pinned to another step, e.g. 0 for per-rollout draws.
  KeyedRng rng(ObjectId id, std::size_t step) const {
    return KeyedRng(stream_key(setup_->seed, setup_->rollout_index, step, id));
  }

  const RolloutSetup& setup() const { return *setup_; }
  const ObservationBuffer& observed() const { return *observed_; }

 private:
  const RolloutSetup* setup_;
  const ObservationBuffer* observed_;
  std::size_t step_;
};

using StepOutput = std::map<ObjectId, ObjectState>;

// Produces next observations (poses) for the objects it controls.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string name() const = 0;

  // Called once before each rollout.
  virtual void reset() {}

  virtual StepOutput step(const PolicyContext& ctx, std::span<const ObjectId> controlled) = 0;

  // Outputs for steps t .. t+horizon-1 computed from the context at t alone.
  // The default rolls step() forward on its own imagined outputs; objects the
  // policy does not control stay frozen at their last observation.
  virtual std::vector<StepOutput> plan(const PolicyContext& ctx, std::span<const ObjectId> controlled,
                                       std::size_t horizon) {
    ObservationBuffer imagined;
    for (const auto& [id, states] : ctx.observed()) {
      auto h = ctx.history(id);
      imagined.emplace(id, std::vector<ObjectState>(h.begin(), h.end()));
    }
    std::vector<StepOutput> out;
    for (std::size_t k = 0; k < horizon; ++k) {
      PolicyContext future(ctx.setup(), imagined, ctx.step() + k);
      StepOutput o = step(future, controlled);
      for (const auto& [id, s] : o) imagined[id].push_back(s);
      out.push_back(std::move(o));
    }
    return out;
  }

  // False when the last step() replayed a held plan instead of re-planning.
  virtual bool inferred_last_step() const { return true; }
};

// ---------------------------------------------------------------------------
// Rollout trace and audit.

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

inline std::uint64_t hash_state(std::uint64_t h, ObjectId id, const ObjectState& s) {
  h = fnv1a(h, &id, sizeof id);
  for (double v : {s.x, s.y, s.z, s.heading}) h = fnv1a(h, &v, sizeof v);
  const unsigned char valid = s.valid ? 1 : 0;
  return fnv1a(h, &valid, 1);
}

inline std::uint64_t hash_outputs(const StepOutput& out) {
  std::uint64_t h = kFnvOffset;
  for (const auto& [id, s] : out) h = hash_state(h, id, s);
  return h;
}

inline std::uint64_t hash_observations(const ObservationBuffer& buf) {
  std::uint64_t h = kFnvOffset;
  for (const auto& [id, states] : buf)
    for (const ObjectState& s : states) h = hash_state(h, id, s);
  return h;
}

// Context hash at step t+1 from the context hash at t and the outputs of t.
inline std::uint64_t chain_hash(std::uint64_t context, std::uint64_t outputs) {
  std::uint64_t h = fnv1a(kFnvOffset, &context, sizeof context);
  return fnv1a(h, &outputs, sizeof outputs);
}

struct TraceStep {
  std::size_t t = 0;
  std::vector<ObjectId> queried;
  std::uint64_t context_hash = 0;
  std::uint64_t output_hash = 0;
  bool env_inferred = true;
  bool av_inferred = true;
};

struct RolloutTrace {
  std::size_t expected_steps = kDefaultFutureLength;
  std::uint64_t history_hash = 0;
  std::vector<TraceStep> steps;
};

struct AuditReport {
  std::size_t steps = 0;
  bool complete = false;
  bool monotonic = false;
  bool hash_chain_ok = false;
  std::size_t effective_replan_interval = 1;
  bool hybrid = false;
  bool passed = false;
  std::vector<std::string> issues;
};

namespace detail {

inline std::size_t max_inference_gap(const RolloutTrace& trace, bool TraceStep::*flag) {
  std::size_t gap = 1;
  std::size_t last = 0;
  bool seen = false;
  for (const TraceStep& s : trace.steps) {
    if (!(s.*flag)) continue;
    if (seen) gap = std::max(gap, s.t - last);
    last = s.t;
    seen = true;
  }
  return gap;
}

}  // namespace detail

// Mechanical check of a harness trace: T strictly increasing steps, each
// context hash chained from the previous context and outputs, and the
// effective replan interval against the declared one.
inline AuditReport audit_trace(const RolloutTrace& trace, std::size_t declared_replan_interval = 1) {
  AuditReport r;
  r.steps = trace.steps.size();
  r.complete = r.steps == trace.expected_steps;
  if (!r.complete)
    r.issues.push_back("expected " + std::to_string(trace.expected_steps) + " steps, found " +
                       std::to_string(r.steps));
  r.monotonic = true;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    if (trace.steps[i].t != i + 1) {
      r.monotonic = false;
      r.issues.push_back("step " + std::to_string(i) + " has t=" + std::to_string(trace.steps[i].t) +
                         ", expected " + std::to_string(i + 1));
      break;
    }
  }
  r.hash_chain_ok = true;
  std::uint64_t expect = trace.history_hash;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    if (trace.steps[i].context_hash != expect) {
      r.hash_chain_ok = false;
      r.issues.push_back("context hash mismatch at t=" + std::to_string(trace.steps[i].t));
      break;
    }
    expect = chain_hash(trace.steps[i].context_hash, trace.steps[i].output_hash);
  }
  r.effective_replan_interval = std::max(detail::max_inference_gap(trace, &TraceStep::env_inferred),
                                         detail::max_inference_gap(trace, &TraceStep::av_inferred));
  r.hybrid = r.effective_replan_interval > 1;
  const bool declared_ok = r.effective_replan_interval == std::max<std::size_t>(declared_replan_interval, 1);
  if (!declared_ok)
    r.issues.push_back("declared replan interval " + std::to_string(declared_replan_interval) +
                       " but trace shows " + std::to_string(r.effective_replan_interval));
  r.passed = r.complete && r.monotonic && r.hash_chain_ok && declared_ok;
  return r;
}

// ---------------------------------------------------------------------------
// Closed-loop rollout engine.

struct RolloutResult {
  JointScene scene;
  RolloutTrace trace;
};

inline RolloutSetup make_rollout_setup(const Scenario& scenario, const std::set<ObjectId>& ids,
                                       std::uint64_t seed, std::uint64_t rollout_index) {
  RolloutSetup setup{scenario.map, {}, scenario.av_track_id, scenario.timestep, scenario.history_length,
                     scenario.future_length, seed, rollout_index};
  for (ObjectId id : ids) {
    const Track* t = scenario.find_track(id);
    setup.objects.emplace(id, ObjectInfo{id, t->object_type, t->length, t->width, t->height});
  }
  return setup;
}

namespace detail {

inline void check_outputs(const std::string& who, const StepOutput& out, std::span<const ObjectId> controlled,
                          std::size_t t) {
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::PolicyContractViolation, who + " at t=" + std::to_string(t) + ": " + msg);
  };
  if (out.size() != controlled.size()) fail("returned " + std::to_string(out.size()) + " states for " +
                                            std::to_string(controlled.size()) + " controlled objects");
  for (ObjectId id : controlled) {
    auto it = out.find(id);
    if (it == out.end()) fail("no state for object " + std::to_string(id));
    const ObjectState& s = it->second;
    if (!s.valid) fail("invalid state for object " + std::to_string(id));
    if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.z) || !std::isfinite(s.heading))
      fail("non-finite state for object " + std::to_string(id));
  }
}

}  // namespace detail

// Steps t = 1..T: both policies see the same context built from the history
// and all outputs of earlier steps; their outputs are appended together.
inline RolloutResult closed_loop_rollout(const Scenario& scenario, Policy& av_policy, Policy& env_policy,
                                         std::uint64_t seed, std::uint64_t rollout_index = 0) {
  if (&av_policy == &env_policy)
    throw Error(ErrorCode::PolicyContractViolation, "AV and environment policies must be distinct objects");
  const std::set<ObjectId> ids = simulated_object_ids(scenario);
  const RolloutSetup setup = make_rollout_setup(scenario, ids, seed, rollout_index);
  const std::vector<ObjectId> av_ids{scenario.av_track_id};
  std::vector<ObjectId> env_ids;
  for (ObjectId id : ids)
    if (id != scenario.av_track_id) env_ids.push_back(id);

  ObservationBuffer observed;
  for (ObjectId id : ids) {
    const Track* t = scenario.find_track(id);
    std::vector<ObjectState> hist(t->states.begin(),
                                  t->states.begin() + static_cast<std::ptrdiff_t>(scenario.history_length));
    hist.reserve(scenario.total_steps());
    observed.emplace(id, std::move(hist));
  }

  RolloutResult result;
  result.scene.scenario_id = scenario.scenario_id;
  result.trace.expected_steps = scenario.future_length;
  result.trace.history_hash = hash_observations(observed);
  av_policy.reset();
  env_policy.reset();

  std::uint64_t context_hash = result.trace.history_hash;
  for (std::size_t t = 1; t <= scenario.future_length; ++t) {
    const PolicyContext ctx(setup, observed, t);
    StepOutput env_out = env_policy.step(ctx, env_ids);
    StepOutput av_out = av_policy.step(ctx, av_ids);
    detail::check_outputs(env_policy.name(), env_out, env_ids, t);
    detail::check_outputs(av_policy.name(), av_out, av_ids, t);

    StepOutput merged = std::move(env_out);
    merged.merge(av_out);
    for (auto& [id, s] : merged) {
      s.heading = normalize_heading(s.heading);
      observed[id].push_back(s);
    }
    TraceStep rec;
    rec.t = t;
    rec.queried = env_ids;
    rec.queried.push_back(scenario.av_track_id);
    rec.context_hash = context_hash;
    rec.output_hash = hash_outputs(merged);
    rec.env_inferred = env_policy.inferred_last_step();
    rec.av_inferred = av_policy.inferred_last_step();
    context_hash = chain_hash(rec.context_hash, rec.output_hash);
    result.trace.steps.push_back(std::move(rec));
  }

  for (ObjectId id : ids) {
    const auto& all = observed[id];
    result.scene.trajectories.emplace(
        id, std::vector<ObjectState>(all.begin() + static_cast<std::ptrdiff_t>(scenario.history_length), all.end()));
  }
  return result;
}

// K independent rollouts seeded base_seed .. base_seed + K - 1.
inline ScenarioRollouts generate_submission(const Scenario& scenario, Policy& av_policy, Policy& env_policy,
                                            std::size_t k = kRolloutsPerScenario, std::uint64_t base_seed = 0,
                                            std::vector<RolloutTrace>* traces = nullptr) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
  ScenarioRollouts out{scenario.scenario_id, {}};
  out.rollouts.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    RolloutResult r = closed_loop_rollout(scenario, av_policy, env_policy, base_seed + i, i);
    out.rollouts.push_back(std::move(r.scene));
    if (traces != nullptr) traces->push_back(std::move(r.trace));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Baseline policies.

namespace detail {

inline const ObjectState* last_valid(std::span<const ObjectState> h) {
  for (auto it = h.rbegin(); it != h.rend(); ++it)
    if (it->valid) return &*it;
  return nullptr;
}

struct Extrapolation {
  ObjectState pose;   // last valid pose
  std::size_t age = 1;  // steps from that pose to the step being produced
  double speed = 0.0;
};

// Last valid pose, and the planar speed from the latest pair of consecutive
// valid observations (zero when no such pair exists).
inline Extrapolation extrapolation_basis(std::span<const ObjectState> h, double dt) {
  Extrapolation e;
  std::size_t last = h.size();
  for (std::size_t i = h.size(); i-- > 0;)
    if (h[i].valid) {
      last = i;
      break;
    }
  if (last == h.size()) return e;
  e.pose = h[last];
  e.age = h.size() - last;
  for (std::size_t i = last + 1; i-- > 1;) {
    if (h[i].valid && h[i - 1].valid) {
      e.speed = norm(h[i].xy() - h[i - 1].xy()) / dt;
      break;
    }
  }
  return e;
}

}  // namespace detail

// Draws x, y, heading ~ N(mu, sigma^2) in the AV frame at t = 0.
class RandomAgent final : public Policy {
 public:
  explicit RandomAgent(double mu = 1.0, double sigma = 0.1) : mu_(mu), sigma_(sigma) {}

  std::string name() const override { return "random"; }

  StepOutput step(const PolicyContext& ctx, std::span<const ObjectId> controlled) override {
    const auto av_hist = ctx.history(ctx.av_id());
    const ObjectState& frame = av_hist[ctx.history_length() - 1];
    StepOutput out;
    for (ObjectId id : controlled) {
      KeyedRng rng = ctx.rng(id);
      const double lx = rng.normal(mu_, sigma_);
      const double ly = rng.normal(mu_, sigma_);
      const double lh = rng.normal(mu_, sigma_);
      const Vec2 p = frame.xy() + rotate({lx, ly}, frame.heading);
      const ObjectState* last = detail::last_valid(ctx.history(id));
      out[id] = ObjectState::at(p.x, p.y, last ? last->z : frame.z, frame.heading + lh);
    }
    return out;
  }

 private:
  double mu_;
  double sigma_;
};

// Holds the last heading and speed observed.
class ConstantVelocityAgent final : public Policy {
 public:
  std::string name() const override { return "constant_velocity"; }

  StepOutput step(const PolicyContext& ctx, std::span<const ObjectId> controlled) override {
    StepOutput out;
    for (ObjectId id : controlled) {
      const auto e = detail::extrapolation_basis(ctx.history(id), ctx.timestep());
      const double dist = e.speed * ctx.timestep() * static_cast<double>(e.age);
      const Vec2 p = e.pose.xy() + Vec2{dist * std::cos(e.pose.heading), dist * std::sin(e.pose.heading)};
      out[id] = ObjectState::at(p.x, p.y, e.pose.z, e.pose.heading);
    }
    return out;
  }
};

// Replays the logged future; holds the previous output where the log is
// invalid.
class LoggedOracleAgent final : public Policy {
 public:
  explicit LoggedOracleAgent(const Scenario& scenario) : history_length_(scenario.history_length) {
    for (const Track& t : scenario.tracks) tracks_.emplace(t.object_id, t.states);
  }

  std::string name() const override { return "logged_oracle"; }

  StepOutput step(const PolicyContext& ctx, std::span<const ObjectId> controlled) override {
    StepOutput out;
    for (ObjectId id : controlled) {
      const auto& states = tracks_.at(id);
      const std::size_t idx = history_length_ - 1 + ctx.step();
      if (idx < states.size() && states[idx].valid) {
        out[id] = states[idx];
      } else {
        const ObjectState* last = detail::last_valid(ctx.history(id));
        out[id] = last ? *last : ObjectState::at(0.0, 0.0, 0.0, 0.0);
      }
    }
    return out;
  }

 private:
  std::size_t history_length_;
  std::map<ObjectId, std::vector<ObjectState>> tracks_;
};

namespace detail {

// The point `ahead` metres further along the nearest lane centre heading
// within 60 degrees of `heading`, shifted `offset` metres to the lane's left.
// Closed polylines wrap around.
inline std::optional<Vec2> lane_lookahead(std::span<const MapFeature> map, Vec2 p, double heading, double ahead,
                                          double offset, double max_distance = 3.0) {
  const MapFeature* lane = nullptr;
  PolylineDistance nearest;
  for (const MapFeature& f : map) {
    if (f.kind != MapFeatureKind::LaneCenter || f.polyline.size() < 2) continue;
    const PolylineDistance d = point_to_polyline_distance(p, f.polyline);
    if (d.distance > max_distance || d.distance >= nearest.distance) continue;
    const Vec2 dir = f.polyline[d.segment + 1] - f.polyline[d.segment];
    if (angle_diff(std::atan2(dir.y, dir.x), heading) > std::numbers::pi / 3.0) continue;
    lane = &f;
    nearest = d;
  }
  if (lane == nullptr) return std::nullopt;
  const auto& pl = lane->polyline;
  const bool closed = pl.front() == pl.back();
  std::size_t i = nearest.segment;
  Vec2 a = pl[i];
  Vec2 ab = pl[i + 1] - a;
  double len = norm(ab);
  double along = std::clamp(dot(p - a, ab) / (len * len), 0.0, 1.0) * len;
  double remaining = ahead;
  for (std::size_t guard = 0; guard < 4 * pl.size(); ++guard) {
    const bool last = i + 2 >= pl.size();
    if (along + remaining <= len || (last && !closed)) break;
    remaining -= len - along;
    i = last ? 0 : i + 1;
    a = pl[i];
    ab = pl[i + 1] - a;
    len = norm(ab);
    along = 0.0;
  }
  const Vec2 u = (1.0 / len) * ab;
  return a + (along + remaining) * u + offset * Vec2{-u.y, u.x};
}

}  // namespace detail

// Lane follower: pure-pursuit steering towards a lane-centre lookahead point
// and intelligent-driver-model speed control behind the nearest leader. Noise
// is drawn once per rollout and object: a desired-speed scale and a lateral
// offset from the lane centre. Held plans come from the default imagined
// rollout, in which objects the policy does not control stay frozen.
class NoisyPlannerAgent final : public Policy {
 public:
  struct Params {
    double speed_sigma = 0.05;   // relative
    double lateral_sigma = 0.2;  // m
    double lookahead_time = 1.0;
    double min_lookahead = 4.0;
    double max_yaw_rate = 1.0;
    double max_accel = 1.5;
    double comfortable_brake = 2.0;
    double min_gap = 2.0;
    double time_headway = 1.0;
  };

  NoisyPlannerAgent() = default;
  explicit NoisyPlannerAgent(Params p) : p_(p) {}

  std::string name() const override { return "noisy_planner"; }

  StepOutput step(const PolicyContext& ctx, std::span<const ObjectId> controlled) override {
    const double dt = ctx.timestep();
    StepOutput out;
    for (ObjectId id : controlled) {
      const auto h = ctx.history(id);
      const auto e = detail::extrapolation_basis(h, dt);
      const ObjectInfo& me = ctx.info(id);

      KeyedRng rng = ctx.rng(id, 0);
      const double initial = detail::extrapolation_basis(h.first(std::min(ctx.history_length(), h.size())), dt).speed;
      const double desired = std::max(0.1, initial * (1.0 + p_.speed_sigma * rng.normal(0.0, 1.0)));
      const double offset = p_.lateral_sigma * rng.normal(0.0, 1.0);

      double yaw_rate = 0.0;
      if (me.type != ObjectType::Pedestrian) {
        const double ahead = std::max(p_.min_lookahead, e.speed * p_.lookahead_time);
        if (auto target = detail::lane_lookahead(ctx.map(), e.pose.xy(), e.pose.heading, ahead, offset)) {
          const Vec2 rel = rotate(*target - e.pose.xy(), -e.pose.heading);
          yaw_rate = std::clamp(2.0 * e.speed * rel.y / dot(rel, rel), -p_.max_yaw_rate, p_.max_yaw_rate);
        }
      }
      const double accel = idm_accel(ctx, id, e, desired);

      double x = e.pose.x, y = e.pose.y, heading = e.pose.heading, speed = e.speed;
      for (std::size_t s = 0; s < e.age; ++s) {
        speed = std::max(0.0, speed + accel * dt);
        heading += yaw_rate * dt;
        x += speed * dt * std::cos(heading);
        y += speed * dt * std::sin(heading);
      }
      out[id] = ObjectState::at(x, y, e.pose.z, heading);
    }
    return out;
  }

 private:
  double idm_accel(const PolicyContext& ctx, ObjectId id, const detail::Extrapolation& self, double desired) const {
    const double dt = ctx.timestep();
    const ObjectInfo& me = ctx.info(id);
    const double v = self.speed;
    double gap = std::numeric_limits<double>::infinity();
    double lead_speed = 0.0;
    for (const auto& [other, info] : ctx.objects()) {
      if (other == id) continue;
      const auto oh = ctx.history(other);
      const ObjectState* last = detail::last_valid(oh);
      if (last == nullptr || angle_diff(last->heading, self.pose.heading) > std::numbers::pi / 4.0) continue;
      const Vec2 rel = rotate(last->xy() - self.pose.xy(), -self.pose.heading);
      if (rel.x <= 0.0 || std::abs(rel.y) > std::max(1.0, 0.5 * (me.width + info.width))) continue;
      const double g = rel.x - 0.5 * (me.length + info.length);
      if (g < gap) {
        gap = g;
        lead_speed = detail::extrapolation_basis(oh, dt).speed;
      }
    }
    double a = p_.max_accel * (1.0 - std::pow(v / desired, 4.0));
    if (gap < std::numeric_limits<double>::infinity()) {
      const double s_star = p_.min_gap + std::max(0.0, v * p_.time_headway +
                                                           v * (v - lead_speed) /
                                                               (2.0 * std::sqrt(p_.max_accel * p_.comfortable_brake)));
      a -= p_.max_accel * std::pow(s_star / std::max(gap, 0.1), 2.0);
    }
    return std::clamp(a, -8.0, p_.max_accel);
  }

  Params p_;
};

// Re-invokes the wrapped policy's planner every `interval` steps and replays
// the held plan in between.
class ReplanWrapper final : public Policy {
 public:
  ReplanWrapper(std::unique_ptr<Policy> inner, std::size_t interval)
      : inner_(std::move(inner)), interval_(std::max<std::size_t>(interval, 1)) {}

  std::string name() const override { return inner_->name() + "@replan" + std::to_string(interval_); }

  void reset() override {
    inner_->reset();
    plan_.clear();
    cursor_ = 0;
  }

  StepOutput step(const PolicyContext& ctx, std::span<const ObjectId> controlled) override {
    inferred_ = cursor_ >= plan_.size();
    if (inferred_) {
      const std::size_t remaining = ctx.future_length() - ctx.step() + 1;
      plan_ = inner_->plan(ctx, controlled, std::min(interval_, remaining));
      cursor_ = 0;
    }
    return plan_[cursor_++];
  }

  bool inferred_last_step() const override { return inferred_; }

  std::size_t interval() const { return interval_; }

 private:
  std::unique_ptr<Policy> inner_;
  std::size_t interval_;
  std::vector<StepOutput> plan_;
  std::size_t cursor_ = 0;
  bool inferred_ = true;
};

// ---------------------------------------------------------------------------
// Registry for selecting policies by name.

using PolicyParams = std::map<std::string, double>;
using PolicyFactory = std::function<std::unique_ptr<Policy>(const Scenario&, const PolicyParams&)>;

class PolicyRegistry {
 public:
  void add(const std::string& name, PolicyFactory factory) { factories_[name] = std::move(factory); }

  bool contains(const std::string& name) const { return factories_.contains(name); }

  std::unique_ptr<Policy> create(const std::string& name, const Scenario& scenario,
                                 const PolicyParams& params = {}, std::size_t replan_interval = 1) const {
    auto it = factories_.find(name);
    if (it == factories_.end()) throw Error(ErrorCode::InvalidArgument, "unknown policy '" + name + "'");
    auto policy = it->second(scenario, params);
    if (replan_interval > 1) return std::make_unique<ReplanWrapper>(std::move(policy), replan_interval);
    return policy;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, f] : factories_) out.push_back(name);
    return out;
  }

 private:
  std::map<std::string, PolicyFactory> factories_;
};

inline double param_or(const PolicyParams& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

inline PolicyRegistry default_policy_registry() {
  PolicyRegistry r;
  r.add("random", [](const Scenario&, const PolicyParams& p) {
    return std::make_unique<RandomAgent>(param_or(p, "mu", 1.0), param_or(p, "sigma", 0.1));
  });
  r.add("constant_velocity",
        [](const Scenario&, const PolicyParams&) { return std::make_unique<ConstantVelocityAgent>(); });
  r.add("logged_oracle",
        [](const Scenario& s, const PolicyParams&) { return std::make_unique<LoggedOracleAgent>(s); });
  r.add("noisy_planner", [](const Scenario&, const PolicyParams& p) {
    NoisyPlannerAgent::Params np;
    np.speed_sigma = param_or(p, "speed_sigma", np.speed_sigma);
    np.lateral_sigma = param_or(p, "lateral_sigma", np.lateral_sigma);
    return std::make_unique<NoisyPlannerAgent>(np);
  });
  return r;
}

}  // namespace simeval
