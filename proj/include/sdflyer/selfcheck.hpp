#pragma once

// Invariant suite behind `sdflyer verify`. Each check builds its own random
// instances from a fixed seed and reports the worst deviation it saw.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dense_net.hpp"
#include "freeflyer.hpp"
#include "gae.hpp"
#include "sdnn.hpp"

namespace sdflyer {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;  // largest deviation observed
  double limit = 0.0;
  std::string detail;
};

// Dense actor carrying the float weights stored alongside a converted net.
inline DenseNet dense_reference(const SdnnNet& net) {
  DenseNet d(net.dims(), Activation::ReLU);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& ly = net.layers()[l];
    std::copy(ly.weight.begin(), ly.weight.end(), d.weight(l).begin());
    std::copy(ly.bias.begin(), ly.bias.end(), d.bias(l).begin());
  }
  return d;
}

namespace detail {

inline DenseNet random_relu_actor(SeededRng& rng, const std::vector<std::size_t>& dims) {
  DenseNet net(dims);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double s = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (double& w : net.weight(l)) w = rng.normal() * s;
    for (double& b : net.bias(l)) b = rng.normal() * 0.1;
  }
  return net;
}

inline std::vector<std::vector<double>> random_walk(SeededRng& rng, std::size_t steps, std::size_t dim, double sd) {
  std::vector<std::vector<double>> out;
  std::vector<double> x(dim);
  for (auto& v : x) v = rng.uniform(-0.5, 0.5);
  for (std::size_t t = 0; t < steps; ++t) {
    for (auto& v : x) v += sd * rng.normal();
    out.push_back(x);
  }
  return out;
}

}  // namespace detail

// Threshold-0 float-reference SDNN against the dense forward pass of the same weights.
inline CheckResult check_sdnn_equivalence(SdnnNet net, const DenseNet& actor, std::uint64_t seed, int streams = 4) {
  CheckResult r{"sdnn threshold-0 equivalence", false, 0.0, 1e-5, ""};
  net.set_threshold(0.0);
  net.set_mode(SdnnMode::FloatReference);
  net.set_schedule(SdnnSchedule::Flush);
  SeededRng rng(seed);
  ForwardCache cache;
  for (int s = 0; s < streams; ++s) {
    net.reset_states();
    for (const auto& x : detail::random_walk(rng, 200, actor.in_dim(), 0.05)) {
      const auto y = net.step(x);
      const auto ref = forward(actor, x, cache);
      for (std::size_t j = 0; j < y.size(); ++j) r.worst = std::max(r.worst, std::abs(y[j] - ref[j]));
    }
  }
  r.passed = r.worst <= r.limit;
  r.detail = std::to_string(streams) + " streams x 200 steps";
  return r;
}

inline CheckResult check_random_sdnn_exactness(std::uint64_t seed, int nets = 10) {
  SeededRng rng(seed);
  CheckResult total{"sigma-delta exactness (random actors)", true, 0.0, 1e-5, ""};
  for (int n = 0; n < nets; ++n) {
    const DenseNet actor = detail::random_relu_actor(rng, {kObsDim, 64, 64, kActDim});
    const auto calib = detail::random_walk(rng, 200, kObsDim, 0.1);
    const CheckResult r =
        check_sdnn_equivalence(convert(actor, 0.0, QuantConfig{}, calib, SdnnMode::FloatReference), actor, rng.next_u64(), 1);
    total.worst = std::max(total.worst, r.worst);
  }
  total.passed = total.worst <= total.limit;
  total.detail = std::to_string(nets) + " actors";
  return total;
}

inline CheckResult check_reconstruction_bound(std::uint64_t seed) {
  CheckResult r{"delta/sigma reconstruction bound", true, 0.0, 1.0, "max |x_rec - x| / threshold"};
  SeededRng rng(seed);
  for (double thr : {0.01, 0.1, 1.0}) {
    DeltaState<double> d(16, thr);
    SigmaState<double> s(16);
    for (const auto& x : detail::random_walk(rng, 200, 16, thr)) {
      const auto rec = s.decode(d.encode(x));
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = std::abs(rec[i] - x[i]) / thr;
        r.worst = std::max(r.worst, e);
        if (!(e < 1.0)) r.passed = false;
      }
    }
  }
  return r;
}

inline CheckResult check_gae(std::uint64_t seed, int episodes = 200) {
  CheckResult r{"gae recursion vs explicit sum", false, 0.0, 1e-12, ""};
  SeededRng rng(seed);
  for (int k = 0; k < episodes; ++k) {
    const std::size_t n = 1 + rng.uniform_index(16);
    RolloutBatch b(1, n);
    for (std::size_t t = 0; t < n; ++t) {
      b.rewards[t] = rng.normal();
      b.values[t] = rng.normal();
    }
    b.dones[n - 1] = rng.uniform01() < 0.5;
    b.bootstrap_values[0] = rng.normal();
    const double g = rng.uniform(0.5, 1.0), l = rng.uniform01();
    const AdvantageSet a = compute_gae(b, g, l);
    for (std::size_t t = 0; t < n; ++t) {
      double sum = 0.0;
      for (std::size_t j = t; j < n; ++j) {
        const double next = j + 1 < n ? b.values[j + 1] : (b.dones[j] ? 0.0 : b.bootstrap_values[0]);
        sum += std::pow(g * l, static_cast<double>(j - t)) * (b.rewards[j] + g * next - b.values[j]);
      }
      r.worst = std::max(r.worst, std::abs(sum - a.advantages[t]));
    }
  }
  r.passed = r.worst <= r.limit;
  r.detail = std::to_string(episodes) + " episodes";
  return r;
}

inline CheckResult check_backprop(std::uint64_t seed, int nets = 5) {
  CheckResult r{"backprop vs central differences", true, 0.0, 1.0, "max |g - fd| / max(1e-6, 1e-4 |fd|)"};
  SeededRng rng(seed);
  const double h = 1e-5;
  for (int n = 0; n < nets; ++n) {
    DenseNet net = detail::random_relu_actor(rng, {4, 6, 5, 3});
    std::vector<double> x(4), w(3);
    for (auto& v : x) v = rng.normal();
    for (auto& v : w) v = rng.normal();
    auto loss = [&](const DenseNet& m) {
      const auto y = forward(m, x);
      double s = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) s += w[j] * y[j];
      return s;
    };
    ForwardCache cache;
    forward(net, x, cache);
    const GradientSet g = backward(net, cache, w);
    for (std::size_t i = 0; i < net.num_params(); ++i) {
      DenseNet p = net, m = net;
      p.params()[i] += h;
      m.params()[i] -= h;
      const double fd = (loss(p) - loss(m)) / (2 * h);
      const double e = std::abs(g.net[i] - fd) / std::max(1e-6, 1e-4 * std::abs(fd));
      r.worst = std::max(r.worst, e);
      if (e > 1.0) r.passed = false;
    }
  }
  return r;
}

inline CheckResult check_conservation(std::uint64_t seed) {
  CheckResult r{"free-flight momentum conservation", true, 0.0, 1e-6, "relative world-frame angular momentum drift"};
  const FlyerParams p;
  SeededRng rng(seed);
  for (int k = 0; k < 10; ++k) {
    FlyerState s;
    s.orientation = UnitQuat::normalized(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    s.ang_vel = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    s.lin_vel = {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
    const Vec3 L0 = s.orientation.rotate(p.inertia_diag.hadamard(s.ang_vel));
    const Vec3 P0 = s.lin_vel * p.mass;
    for (int t = 0; t < p.episode_len; ++t) {
      s = step(s, Action{}, p);
      if (!(s.lin_vel * p.mass == P0) || std::abs(s.orientation.norm() - 1.0) > 1e-9) r.passed = false;
    }
    const Vec3 L = s.orientation.rotate(p.inertia_diag.hadamard(s.ang_vel));
    r.worst = std::max(r.worst, (L - L0).norm() / L0.norm());
  }
  r.passed = r.passed && r.worst <= r.limit;
  return r;
}

inline std::vector<CheckResult> run_invariant_suite(std::uint64_t seed = 1) {
  return {check_random_sdnn_exactness(seed), check_reconstruction_bound(seed + 1), check_gae(seed + 2),
          check_backprop(seed + 3), check_conservation(seed + 4)};
}

}  // namespace sdflyer
