#pragma once

// Zero-gravity 6-DOF free-flyer: a rigid body pushed by body-frame force and
// torque, with the 12-entry observation used by the controller.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>

#include "errors.hpp"
#include "mathcore.hpp"
#include "rng.hpp"

namespace sdflyer {

inline constexpr std::size_t kObsDim = 12;
inline constexpr std::size_t kActDim = 6;

using Observation = std::array<double, kObsDim>;

struct FlyerParams {
  double mass = 9.58;                     // kg
  Vec3 inertia_diag{0.153, 0.143, 0.162};  // kg m^2
  double force_limit = 0.85;              // N, per axis
  double torque_limit = 0.1;              // N m, per axis
  double dt = 0.1;                        // s
  int episode_len = 200;                  // steps

  void validate() const {
    require(mass > 0 && inertia_diag.x > 0 && inertia_diag.y > 0 && inertia_diag.z > 0 && force_limit > 0 &&
                torque_limit > 0 && dt > 0 && episode_len > 0,
            ErrorKind::Config, "FlyerParams: all physical parameters must be positive");
  }
};

struct FlyerState {
  Vec3 position;
  UnitQuat orientation;
  Vec3 lin_vel;  // world frame
  Vec3 ang_vel;  // body frame

  bool operator==(const FlyerState&) const = default;
  bool finite() const { return position.finite() && orientation.finite() && lin_vel.finite() && ang_vel.finite(); }
};

struct GoalPose {
  Vec3 position;
  UnitQuat orientation;

  bool operator==(const GoalPose&) const = default;
};

struct Action {
  Vec3 force;   // body frame, N
  Vec3 torque;  // body frame, N m

  bool operator==(const Action&) const = default;
};

enum class Task { Undock, Random };

inline std::string to_string(Task t) { return t == Task::Undock ? "undock" : "random"; }

inline Task task_from_string(const std::string& s) {
  if (s == "undock") return Task::Undock;
  if (s == "random") return Task::Random;
  fail(ErrorKind::Config, "unknown task '" + s + "' (expected undock or random)");
}

inline Action clamp_action(const Action& a, const FlyerParams& p) {
  auto c = [](const Vec3& v, double lim) {
    return Vec3{std::clamp(v.x, -lim, lim), std::clamp(v.y, -lim, lim), std::clamp(v.z, -lim, lim)};
  };
  return {c(a.force, p.force_limit), c(a.torque, p.torque_limit)};
}

// Unbounded network output -> actuator command: limit * tanh(raw).
inline Action squash_action(std::span<const double> raw, const FlyerParams& p) {
  require(raw.size() == kActDim, ErrorKind::Config, "squash_action: expected 6 raw outputs");
  return {Vec3{std::tanh(raw[0]), std::tanh(raw[1]), std::tanh(raw[2])} * p.force_limit,
          Vec3{std::tanh(raw[3]), std::tanh(raw[4]), std::tanh(raw[5])} * p.torque_limit};
}

// Semi-implicit Euler. Translation: v += R(q) F / m dt, then p += v dt.
// Rotation uses the momentum form of Euler's equation I w' = tau - w x I w:
// the torque impulse is added to the world-frame angular momentum L, the
// attitude advances with the post-impulse rate, and the body rate is then
// recovered from L in the new attitude. Free rotation conserves L to rounding.
inline FlyerState step(const FlyerState& s, const Action& raw_action, const FlyerParams& p) {
  require(raw_action.force.finite() && raw_action.torque.finite(), ErrorKind::Divergence,
          "step: non-finite action");
  const Action a = clamp_action(raw_action, p);
  const Vec3& I = p.inertia_diag;
  const Vec3 inv_I{1.0 / I.x, 1.0 / I.y, 1.0 / I.z};

  FlyerState n;
  n.lin_vel = s.lin_vel + s.orientation.rotate(a.force) * (p.dt / p.mass);
  n.position = s.position + n.lin_vel * p.dt;

  if (s.ang_vel == Vec3{} && a.torque == Vec3{}) {
    n.orientation = s.orientation;
    n.ang_vel = s.ang_vel;
  } else {
    const Vec3 momentum = s.orientation.rotate(I.hadamard(s.ang_vel) + a.torque * p.dt);
    const Vec3 rate = s.orientation.rotate_inverse(momentum).hadamard(inv_I);
    n.orientation = integrate_quat(s.orientation, rate, p.dt);
    n.ang_vel = n.orientation.rotate_inverse(momentum).hadamard(inv_I);
  }
  require(n.finite(), ErrorKind::Divergence, "step: simulator state became non-finite");
  return n;
}

// [lin_vel (world), ang_vel (body), goal - position (world), orientation error rotvec]
inline Observation observe(const FlyerState& s, const GoalPose& g) {
  const Vec3 dp = g.position - s.position;
  const Vec3 dq = quat_error_rotvec(s.orientation, g.orientation);
  return {s.lin_vel.x, s.lin_vel.y, s.lin_vel.z, s.ang_vel.x, s.ang_vel.y, s.ang_vel.z,
          dp.x,        dp.y,        dp.z,        dq.x,        dq.y,        dq.z};
}

struct RewardWeights {
  double position = 1.0;
  double orientation = 0.5;
  double lin_vel = 0.2;
  double ang_vel = 0.1;
  double action = 0.01;
};

// Penalty on distance to goal, residual motion and control effort.
// The action enters normalized by the actuator limits.
inline double reward(const Observation& obs, const Action& a, const FlyerParams& p, const RewardWeights& w) {
  auto norm3 = [&](std::size_t i) { return std::sqrt(obs[i] * obs[i] + obs[i + 1] * obs[i + 1] + obs[i + 2] * obs[i + 2]); };
  const Vec3 f = a.force / p.force_limit, t = a.torque / p.torque_limit;
  return -w.position * norm3(6) - w.orientation * norm3(9) - w.lin_vel * norm3(0) - w.ang_vel * norm3(3) -
         w.action * (f.dot(f) + t.dot(t));
}

inline GoalPose sample_goal(SeededRng& rng, Task task) {
  if (task == Task::Undock) return {Vec3{0.5, 0.0, 0.0}, UnitQuat::identity()};
  GoalPose g;
  g.position = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
  const double x = rng.uniform(-0.5, 0.5), y = rng.uniform(-0.5, 0.5), z = rng.uniform(-0.5, 0.5);
  g.orientation = UnitQuat::normalized(1.0, x, y, z);
  return g;
}

struct Episode {
  FlyerState state;
  GoalPose goal;

  bool operator==(const Episode&) const = default;
};

inline Episode reset(SeededRng& rng, Task task) { return {FlyerState{}, sample_goal(rng, task)}; }

}  // namespace sdflyer
