#pragma once

// Rollout storage and generalized advantage estimation.

#include <cmath>
#include <cstddef>
#include <vector>

#include "errors.hpp"
#include "freeflyer.hpp"

namespace sdflyer {

// Rectangular (n_steps x n_envs) rollout, step-major: sample (t, e) lives at t * n_envs + e.
struct RolloutBatch {
  std::size_t n_envs = 0;
  std::size_t n_steps = 0;
  std::vector<double> observations;  // size() x 12
  std::vector<double> actions;       // size() x 6, pre-squash Gaussian samples
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<unsigned char> dones;    // episode ended after this step
  std::vector<double> bootstrap_values;  // V(s_{n_steps}) per env

  RolloutBatch() = default;
  RolloutBatch(std::size_t envs, std::size_t steps)
      : n_envs(envs),
        n_steps(steps),
        observations(envs * steps * kObsDim),
        actions(envs * steps * kActDim),
        log_probs(envs * steps),
        rewards(envs * steps),
        values(envs * steps),
        dones(envs * steps),
        bootstrap_values(envs) {}

  std::size_t size() const { return n_envs * n_steps; }
  std::size_t index(std::size_t t, std::size_t e) const { return t * n_envs + e; }

  void validate() const {
    const std::size_t n = size();
    require(observations.size() == n * kObsDim && actions.size() == n * kActDim && log_probs.size() == n &&
                rewards.size() == n && values.size() == n && dones.size() == n &&
                bootstrap_values.size() == n_envs,
            ErrorKind::Config, "RolloutBatch: arrays do not match n_envs x n_steps");
  }
};

struct AdvantageSet {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t)
// A_t     = delta_t + gamma lambda (1 - done_t) A_{t+1}
inline AdvantageSet compute_gae(const RolloutBatch& batch, double gamma, double lambda) {
  batch.validate();
  AdvantageSet out;
  out.advantages.assign(batch.size(), 0.0);
  out.returns.assign(batch.size(), 0.0);
  for (std::size_t e = 0; e < batch.n_envs; ++e) {
    double next_adv = 0.0;
    double next_value = batch.bootstrap_values[e];
    for (std::size_t t = batch.n_steps; t-- > 0;) {
      const std::size_t i = batch.index(t, e);
      const double live = batch.dones[i] ? 0.0 : 1.0;
      const double delta = batch.rewards[i] + gamma * next_value * live - batch.values[i];
      next_adv = delta + gamma * lambda * live * next_adv;
      out.advantages[i] = next_adv;
      out.returns[i] = next_adv + batch.values[i];
      next_value = batch.values[i];
    }
  }
  return out;
}

// In place: mean 0, std 1 (population std; untouched if the spread is ~0).
inline void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(adv.size()));
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);
}

}  // namespace sdflyer
