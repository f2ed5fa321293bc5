#pragma once

// Clipped-objective PPO with GAE over a set of free-flyer environments.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "adam.hpp"
#include "dense_net.hpp"
#include "errors.hpp"
#include "freeflyer.hpp"
#include "gae.hpp"
#include "rng.hpp"

namespace sdflyer {

struct Policy {
  DenseNet actor;
  GaussianHead head;

  // Deterministic action: the Gaussian mean.
  std::vector<double> mean(std::span<const double> obs) const { return forward(actor, obs); }
};

inline Policy make_policy(SeededRng& rng, double init_log_std = std::log(0.5)) {
  Policy p{DenseNet({kObsDim, 64, 64, kActDim}), GaussianHead(kActDim, init_log_std)};
  orthogonal_init(p.actor, rng, std::sqrt(2.0), 0.01);
  return p;
}

inline DenseNet make_critic(SeededRng& rng) {
  DenseNet critic({kObsDim, 64, 64, 1});
  orthogonal_init(critic, rng, std::sqrt(2.0), 1.0);
  return critic;
}

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatch = 512;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  int n_envs = 256;
  int n_steps = 64;
  int iterations = 500;
  double lr = 3e-4;
  bool anneal_lr = true;
  double max_grad_norm = 0.5;
  double init_log_std = -0.6931471805599453;  // ln(0.5)
  // Multiplies training rewards only; keeps value targets order-1.
  double reward_scale = 0.1;
  // Fraction of training episodes whose goal keeps the identity orientation
  // (undock-like); the rest use the random-goal envelope.
  double undock_fraction = 0.25;
  // Training episodes start from an attitude drawn from the random-goal envelope.
  bool perturb_initial_orientation = true;
  std::uint64_t seed = 1;
  FlyerParams flyer;
  RewardWeights reward;

  void validate() const {
    require(gamma > 0 && gamma <= 1, ErrorKind::Config, "ppo: gamma must be in (0, 1]");
    require(lambda >= 0 && lambda <= 1, ErrorKind::Config, "ppo: lambda must be in [0, 1]");
    require(clip_eps > 0 && clip_eps < 1, ErrorKind::Config, "ppo: clip epsilon must be in (0, 1)");
    require(epochs > 0 && minibatch > 0 && n_envs > 0 && n_steps > 0 && iterations >= 0, ErrorKind::Config,
            "ppo: epochs, minibatch, n_envs, n_steps must be positive");
    require(reward_scale > 0, ErrorKind::Config, "ppo: reward_scale must be positive");
    require(lr > 0 && max_grad_norm > 0, ErrorKind::Config, "ppo: lr and max_grad_norm must be positive");
    require(undock_fraction >= 0 && undock_fraction <= 1, ErrorKind::Config, "ppo: undock_fraction in [0, 1]");
    flyer.validate();
  }
};

// Per-sample clipped surrogate min(rho A, clip(rho, 1-eps, 1+eps) A) and its
// derivative with respect to the sample's log-probability.
struct SurrogateTerm {
  double ratio = 1.0;
  double value = 0.0;
  double d_log_prob = 0.0;
  bool clipped = false;  // the clipped branch is the active (strictly smaller) one
};

inline SurrogateTerm clipped_surrogate(double log_prob_new, double log_prob_old, double advantage, double eps) {
  SurrogateTerm s;
  s.ratio = std::exp(log_prob_new - log_prob_old);
  require(std::isfinite(s.ratio), ErrorKind::Divergence,
          "ppo: non-finite probability ratio (log_prob " + std::to_string(log_prob_new) + " vs old " +
              std::to_string(log_prob_old) + ")");
  const double unclipped = s.ratio * advantage;
  const double clipped = std::clamp(s.ratio, 1.0 - eps, 1.0 + eps) * advantage;
  if (clipped < unclipped) {
    s.value = clipped;
    s.clipped = true;
  } else {
    s.value = unclipped;
    s.d_log_prob = unclipped;  // d(rho A)/d(log pi) = rho A
  }
  return s;
}

struct LossStats {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

struct Gradients {
  GradientSet actor;
  GradientSet critic;

  void zero() {
    actor.zero();
    critic.zero();
  }
};

// Scratch buffers reused across samples.
struct LossWorkspace {
  ForwardCache actor_cache, critic_cache;
  std::vector<double> d_mean = std::vector<double>(kActDim), d_log_std = std::vector<double>(kActDim);
};

// PPO loss over the samples `idx`:
//   L = -mean(min(rho A, clip(rho) A)) + value_coef mean((V - R)^2) - entropy_coef H
// Gradients are accumulated into `grads` (zero them first).
inline LossStats clipped_loss(const RolloutBatch& batch, const AdvantageSet& adv, const Policy& policy,
                              const DenseNet& critic, std::span<const std::size_t> idx, const PpoConfig& cfg,
                              Gradients& grads, LossWorkspace& ws) {
  LossStats st;
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  double d_value_out[1];
  for (std::size_t i : idx) {
    const std::span<const double> obs(batch.observations.data() + i * kObsDim, kObsDim);
    const std::span<const double> act(batch.actions.data() + i * kActDim, kActDim);

    const auto mean = forward(policy.actor, obs, ws.actor_cache);
    const double lp = log_prob_grad(mean, policy.head, act, ws.d_mean, ws.d_log_std);
    const SurrogateTerm s = clipped_surrogate(lp, batch.log_probs[i], adv.advantages[i], cfg.clip_eps);
    st.policy -= s.value * inv_n;
    st.clip_fraction += (std::abs(s.ratio - 1.0) > cfg.clip_eps ? 1.0 : 0.0) * inv_n;
    st.approx_kl += ((s.ratio - 1.0) - (lp - batch.log_probs[i])) * inv_n;
    if (s.d_log_prob != 0.0) {
      const double scale = -s.d_log_prob * inv_n;
      for (std::size_t k = 0; k < kActDim; ++k) {
        ws.d_mean[k] *= scale;
        grads.actor.log_std[k] += scale * ws.d_log_std[k];
      }
      backward(policy.actor, ws.actor_cache, ws.d_mean, grads.actor.net);
    }

    const double v = forward(critic, obs, ws.critic_cache)[0];
    const double err = v - adv.returns[i];
    st.value += err * err * inv_n;
    d_value_out[0] = cfg.value_coef * 2.0 * err * inv_n;
    backward(critic, ws.critic_cache, d_value_out, grads.critic.net);
  }
  st.entropy = policy.head.entropy();
  for (double& g : grads.actor.log_std) g -= cfg.entropy_coef;
  st.total = st.policy + cfg.value_coef * st.value - cfg.entropy_coef * st.entropy;
  require(std::isfinite(st.total), ErrorKind::Divergence, "ppo: non-finite loss");
  return st;
}

struct TrainLogRow {
  int iteration = 0;
  double mean_return = 0.0;           // undiscounted, episodes finished this iteration
  double mean_final_pos_err = 0.0;    // m
  double mean_final_ang_err = 0.0;    // deg
  int episodes = 0;
  double greedy_undock_pos_err = 0.0;  // m, deterministic undock rollout after the update
  double greedy_undock_ang_err = 0.0;  // deg
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double mean_std = 0.0;
};

struct TrainResult {
  Policy policy;
  DenseNet critic;
  std::vector<TrainLogRow> log;
};

// Final-step errors of a deterministic (mean-action) episode.
struct GreedyOutcome {
  double pos_err = 0.0;
  double ang_err_deg = 0.0;
};

inline GreedyOutcome greedy_rollout(const DenseNet& actor, const FlyerParams& params, const GoalPose& goal) {
  FlyerState s;
  ForwardCache cache;
  for (int t = 0; t < params.episode_len; ++t) {
    const Observation obs = observe(s, goal);
    const auto out = forward(actor, obs, cache);
    s = step(s, squash_action(out, params), params);
  }
  return {(goal.position - s.position).norm(), quat_angle_deg(s.orientation, goal.orientation)};
}

namespace detail {

struct TrainEnv {
  SeededRng rng;
  FlyerState state;
  GoalPose goal;
  int t = 0;
  double ret = 0.0;
};

inline void reset_training_env(TrainEnv& env, const PpoConfig& cfg) {
  const bool undock_like = env.rng.uniform01() < cfg.undock_fraction;
  env.goal = sample_goal(env.rng, Task::Random);
  if (undock_like) env.goal.orientation = UnitQuat::identity();
  env.state = FlyerState{};
  if (cfg.perturb_initial_orientation && undock_like) {
    const double x = env.rng.uniform(-0.5, 0.5), y = env.rng.uniform(-0.5, 0.5), z = env.rng.uniform(-0.5, 0.5);
    env.state.orientation = UnitQuat::normalized(1.0, x, y, z);
  }
  env.t = 0;
  env.ret = 0.0;
}

}  // namespace detail

using TrainCallback = std::function<void(const TrainLogRow&)>;

inline TrainResult train(const PpoConfig& cfg, const TrainCallback& on_iteration = {}) {
  cfg.validate();
  SeededRng rng(cfg.seed);
  SeededRng init_rng = rng.fork(0);
  TrainResult result{make_policy(init_rng, cfg.init_log_std), make_critic(init_rng), {}};
  Policy& policy = result.policy;
  DenseNet& critic = result.critic;

  const auto n_envs = static_cast<std::size_t>(cfg.n_envs);
  const auto n_steps = static_cast<std::size_t>(cfg.n_steps);
  std::vector<detail::TrainEnv> envs(n_envs);
  for (std::size_t e = 0; e < n_envs; ++e) {
    envs[e].rng = rng.fork(1000 + e);
    detail::reset_training_env(envs[e], cfg);
  }
  SeededRng noise_rng = rng.fork(1);
  SeededRng shuffle_rng = rng.fork(2);

  AdamState actor_opt(policy.actor.num_params()), head_opt(kActDim), critic_opt(critic.num_params());
  Gradients grads{GradientSet(policy.actor, kActDim), GradientSet(critic)};
  LossWorkspace ws;
  ForwardCache cache;
  RolloutBatch batch(n_envs, n_steps);
  std::vector<std::size_t> order(batch.size());

  for (int it = 0; it < cfg.iterations; ++it) {
    TrainLogRow row;
    row.iteration = it;

    // Collect.
    for (std::size_t t = 0; t < n_steps; ++t) {
      for (std::size_t e = 0; e < n_envs; ++e) {
        auto& env = envs[e];
        const std::size_t i = batch.index(t, e);
        const Observation obs = observe(env.state, env.goal);
        std::copy(obs.begin(), obs.end(), batch.observations.begin() + static_cast<std::ptrdiff_t>(i * kObsDim));
        batch.values[i] = forward(critic, obs, cache)[0];
        const auto mean = forward(policy.actor, obs, cache);
        double* a = batch.actions.data() + i * kActDim;
        for (std::size_t k = 0; k < kActDim; ++k) a[k] = mean[k] + std::exp(policy.head.log_std[k]) * noise_rng.normal();
        batch.log_probs[i] = log_prob(mean, policy.head, std::span<const double>(a, kActDim));

        const Action cmd = squash_action(std::span<const double>(a, kActDim), cfg.flyer);
        env.state = step(env.state, cmd, cfg.flyer);
        ++env.t;
        const Observation next = observe(env.state, env.goal);
        double r = reward(next, cmd, cfg.flyer, cfg.reward);
        env.ret += r;
        const bool done = env.t >= cfg.flyer.episode_len;
        if (done) {
          // Time limit, not a terminal state: fold the bootstrap into the reward.
          r += cfg.gamma * forward(critic, next, cache)[0] / cfg.reward_scale;
          row.mean_return += env.ret;
          row.mean_final_pos_err += (env.goal.position - env.state.position).norm();
          row.mean_final_ang_err += quat_angle_deg(env.state.orientation, env.goal.orientation);
          ++row.episodes;
          detail::reset_training_env(env, cfg);
        }
        batch.rewards[i] = r * cfg.reward_scale;
        batch.dones[i] = done ? 1 : 0;
      }
    }
    for (std::size_t e = 0; e < n_envs; ++e)
      batch.bootstrap_values[e] = forward(critic, observe(envs[e].state, envs[e].goal), cache)[0];
    if (row.episodes > 0) {
      row.mean_return /= row.episodes;
      row.mean_final_pos_err /= row.episodes;
      row.mean_final_ang_err /= row.episodes;
    } else {
      row.mean_return = row.mean_final_pos_err = row.mean_final_ang_err = std::nan("");
    }

    AdvantageSet adv = compute_gae(batch, cfg.gamma, cfg.lambda);
    normalize_advantages(adv.advantages);

    // Update.
    AdamHyper hyper;
    hyper.lr = cfg.anneal_lr ? cfg.lr * (1.0 - static_cast<double>(it) / cfg.iterations) : cfg.lr;
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t mb = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatch), order.size());
    int n_updates = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      shuffle_rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t start = 0; start + mb <= order.size(); start += mb) {
        grads.zero();
        const LossStats st = clipped_loss(batch, adv, policy, critic,
                                          std::span<const std::size_t>(order).subspan(start, mb), cfg, grads, ws);
        double sq = 0.0;
        for (double g : grads.actor.net) sq += g * g;
        for (double g : grads.actor.log_std) sq += g * g;
        for (double g : grads.critic.net) sq += g * g;
        const double norm = std::sqrt(sq);
        require(std::isfinite(norm), ErrorKind::Divergence,
                "ppo: non-finite gradient at iteration " + std::to_string(it));
        if (norm > cfg.max_grad_norm) {
          const double c = cfg.max_grad_norm / norm;
          for (double& g : grads.actor.net) g *= c;
          for (double& g : grads.actor.log_std) g *= c;
          for (double& g : grads.critic.net) g *= c;
        }
        adam_step(policy.actor.params(), grads.actor.net, actor_opt, hyper);
        adam_step(policy.head.log_std, grads.actor.log_std, head_opt, hyper);
        adam_step(critic.params(), grads.critic.net, critic_opt, hyper);
        policy.head.clamp();

        row.policy_loss += st.policy;
        row.value_loss += st.value;
        row.approx_kl += st.approx_kl;
        row.clip_fraction += st.clip_fraction;
        ++n_updates;
      }
    }
    if (n_updates > 0) {
      row.policy_loss /= n_updates;
      row.value_loss /= n_updates;
      row.approx_kl /= n_updates;
      row.clip_fraction /= n_updates;
    }
    require(policy.actor.finite() && critic.finite(), ErrorKind::Divergence,
            "ppo: parameters diverged at iteration " + std::to_string(it));

    const GreedyOutcome g = greedy_rollout(policy.actor, cfg.flyer, sample_goal(rng, Task::Undock));
    row.greedy_undock_pos_err = g.pos_err;
    row.greedy_undock_ang_err = g.ang_err_deg;
    double s = 0.0;
    for (double ls : policy.head.log_std) s += std::exp(ls);
    row.mean_std = s / kActDim;

    result.log.push_back(row);
    if (on_iteration) on_iteration(row);
  }
  return result;
}

}  // namespace sdflyer
