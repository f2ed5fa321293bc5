#pragma once

// Fully connected feed-forward networks with analytic backpropagation.
//
// Parameters live in one flat buffer, layer by layer: the row-major weight
// matrix (out x in) followed by the bias vector. Gradients use the same layout,
// so optimizers can run on plain spans.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace sdflyer {

enum class Activation { ReLU, Tanh, Identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  fail(ErrorKind::Config, "unknown activation '" + s + "'");
}

class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(std::vector<std::size_t> dims, Activation hidden = Activation::ReLU)
      : dims_(std::move(dims)), hidden_(hidden) {
    require(dims_.size() >= 2, ErrorKind::Config, "DenseNet needs at least an input and an output layer");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      require(dims_[l] > 0 && dims_[l + 1] > 0, ErrorKind::Config, "DenseNet: zero-width layer");
      offsets_.push_back(total);
      total += dims_[l + 1] * dims_[l] + dims_[l + 1];
    }
    params_.assign(total, 0.0);
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t num_layers() const { return dims_.size() - 1; }
  std::size_t in_dim() const { return dims_.front(); }
  std::size_t out_dim() const { return dims_.back(); }
  Activation hidden_activation() const { return hidden_; }
  std::size_t num_params() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // Layer l maps dims[l] -> dims[l+1].
  std::span<double> weight(std::size_t l) { return {params_.data() + offsets_[l], dims_[l + 1] * dims_[l]}; }
  std::span<const double> weight(std::size_t l) const {
    return {params_.data() + offsets_[l], dims_[l + 1] * dims_[l]};
  }
  std::span<double> bias(std::size_t l) {
    return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
  }
  std::span<const double> bias(std::size_t l) const {
    return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
  }
  std::size_t layer_offset(std::size_t l) const { return offsets_[l]; }

  bool finite() const {
    for (double p : params_)
      if (!std::isfinite(p)) return false;
    return true;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  Activation hidden_ = Activation::ReLU;
};

// Orthogonal initialization: each weight matrix gets orthonormal rows (or
// columns, whichever is shorter) scaled by the layer gain; biases start at 0.
inline void orthogonal_init(DenseNet& net, SeededRng& rng, double hidden_gain, double output_gain) {
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const std::size_t rows = net.dims()[l + 1], cols = net.dims()[l];
    std::vector<double> m(rows * cols);
    for (double& v : m) v = rng.normal();
    // Orthonormalize along the shorter dimension with modified Gram-Schmidt.
    const bool by_rows = rows <= cols;
    const std::size_t count = by_rows ? rows : cols, len = by_rows ? cols : rows;
    auto at = [&](std::size_t vec, std::size_t k) -> double& {
      return by_rows ? m[vec * cols + k] : m[k * cols + vec];
    };
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        double d = 0.0;
        for (std::size_t k = 0; k < len; ++k) d += at(i, k) * at(j, k);
        for (std::size_t k = 0; k < len; ++k) at(i, k) -= d * at(j, k);
      }
      double n = 0.0;
      for (std::size_t k = 0; k < len; ++k) n += at(i, k) * at(i, k);
      n = std::sqrt(n);
      for (std::size_t k = 0; k < len; ++k) at(i, k) /= n;
    }
    const double gain = l + 1 == net.num_layers() ? output_gain : hidden_gain;
    auto w = net.weight(l);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = gain * m[i];
    for (double& b : net.bias(l)) b = 0.0;
  }
}

// Activations kept by forward() for backward(). post[0] is the input.
struct ForwardCache {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;

  std::span<const double> output() const { return post.back(); }
};

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Identity: return z;
  }
  return z;
}

inline double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

inline std::span<const double> forward(const DenseNet& net, std::span<const double> input, ForwardCache& cache) {
  require(input.size() == net.in_dim(), ErrorKind::Config,
          "forward: input has " + std::to_string(input.size()) + " entries, network expects " +
              std::to_string(net.in_dim()));
  const std::size_t L = net.num_layers();
  cache.pre.resize(L + 1);
  cache.post.resize(L + 1);
  cache.post[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t in = net.dims()[l], out = net.dims()[l + 1];
    const auto w = net.weight(l);
    const auto b = net.bias(l);
    const double* x = cache.post[l].data();
    auto& z = cache.pre[l + 1];
    auto& y = cache.post[l + 1];
    z.resize(out);
    y.resize(out);
    const Activation act = l + 1 == L ? Activation::Identity : net.hidden_activation();
    for (std::size_t i = 0; i < out; ++i) {
      const double* row = w.data() + i * in;
      double acc = b[i];
      for (std::size_t k = 0; k < in; ++k) acc += row[k] * x[k];
      z[i] = acc;
      y[i] = activate(act, acc);
    }
  }
  return cache.post[L];
}

inline std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
  ForwardCache cache;
  const auto out = forward(net, input, cache);
  return {out.begin(), out.end()};
}

// Accumulates d(loss)/d(params) into grad_params (same layout as net.params())
// given d(loss)/d(output). Optionally writes d(loss)/d(input).
inline void backward(const DenseNet& net, const ForwardCache& cache, std::span<const double> grad_out,
                     std::span<double> grad_params, std::span<double> grad_input = {}) {
  const std::size_t L = net.num_layers();
  require(cache.post.size() == L + 1 && cache.post[0].size() == net.in_dim() &&
              cache.post[L].size() == net.out_dim(),
          ErrorKind::Config, "backward: forward cache missing or from a different network");
  require(grad_out.size() == net.out_dim(), ErrorKind::Config, "backward: output gradient has wrong length");
  require(grad_params.size() == net.num_params(), ErrorKind::Config, "backward: gradient buffer has wrong length");

  std::vector<double> delta(grad_out.begin(), grad_out.end());
  std::vector<double> prev;
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t in = net.dims()[l], out = net.dims()[l + 1];
    const Activation act = l + 1 == L ? Activation::Identity : net.hidden_activation();
    const auto& z = cache.pre[l + 1];
    const auto& y = cache.post[l + 1];
    for (std::size_t i = 0; i < out; ++i) delta[i] *= activate_grad(act, z[i], y[i]);

    const auto w = net.weight(l);
    double* gw = grad_params.data() + net.layer_offset(l);
    double* gb = gw + out * in;
    const double* x = cache.post[l].data();
    for (std::size_t i = 0; i < out; ++i) {
      const double d = delta[i];
      gb[i] += d;
      if (d == 0.0) continue;
      double* grow = gw + i * in;
      for (std::size_t k = 0; k < in; ++k) grow[k] += d * x[k];
    }
    if (l == 0 && grad_input.empty()) break;
    prev.assign(in, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
      const double d = delta[i];
      if (d == 0.0) continue;
      const double* row = w.data() + i * in;
      for (std::size_t k = 0; k < in; ++k) prev[k] += d * row[k];
    }
    delta.swap(prev);
  }
  if (!grad_input.empty()) {
    require(grad_input.size() == net.in_dim(), ErrorKind::Config, "backward: input gradient has wrong length");
    std::copy(delta.begin(), delta.begin() + static_cast<std::ptrdiff_t>(net.in_dim()), grad_input.begin());
  }
}

// State-independent diagonal Gaussian exploration head.
struct GaussianHead {
  static constexpr double kMinLogStd = -20.0;
  static constexpr double kMaxLogStd = 2.0;

  std::vector<double> log_std;

  GaussianHead() = default;
  GaussianHead(std::size_t dim, double init_log_std) : log_std(dim, init_log_std) {}

  void clamp() {
    for (double& v : log_std) v = std::clamp(v, kMinLogStd, kMaxLogStd);
  }

  double entropy() const {
    double h = 0.0;
    for (double ls : log_std) h += ls + 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
    return h;
  }
};

// Parameter gradients mirroring a DenseNet (+ optional Gaussian head).
struct GradientSet {
  std::vector<double> net;
  std::vector<double> log_std;

  GradientSet() = default;
  GradientSet(const DenseNet& n, std::size_t head_dim = 0) : net(n.num_params(), 0.0), log_std(head_dim, 0.0) {}

  void zero() {
    std::fill(net.begin(), net.end(), 0.0);
    std::fill(log_std.begin(), log_std.end(), 0.0);
  }
  bool all_zero() const {
    for (double g : net)
      if (g != 0.0) return false;
    for (double g : log_std)
      if (g != 0.0) return false;
    return true;
  }
};

inline GradientSet backward(const DenseNet& net, const ForwardCache& cache, std::span<const double> grad_out) {
  GradientSet g(net);
  backward(net, cache, grad_out, g.net);
  return g;
}

inline double log_prob(std::span<const double> mean, const GaussianHead& head, std::span<const double> action) {
  require(mean.size() == head.log_std.size() && action.size() == mean.size(), ErrorKind::Config,
          "log_prob: dimension mismatch");
  constexpr double half_log_2pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)
  double lp = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    const double ls = head.log_std[k];
    const double u = (action[k] - mean[k]) * std::exp(-ls);
    lp += -0.5 * u * u - ls - half_log_2pi;
  }
  return lp;
}

// log_prob plus its partials with respect to the mean and to log_std.
inline double log_prob_grad(std::span<const double> mean, const GaussianHead& head, std::span<const double> action,
                            std::span<double> d_mean, std::span<double> d_log_std) {
  constexpr double half_log_2pi = 0.91893853320467274178;
  double lp = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    const double ls = head.log_std[k];
    const double inv_std = std::exp(-ls);
    const double u = (action[k] - mean[k]) * inv_std;
    lp += -0.5 * u * u - ls - half_log_2pi;
    d_mean[k] = u * inv_std;
    d_log_std[k] = u * u - 1.0;
  }
  return lp;
}

}  // namespace sdflyer
