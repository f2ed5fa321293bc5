#pragma once

// Sigma-delta conversion of a ReLU actor and an event-driven runtime for it.
//
// Layout for a [12, 64, 64, 6] actor:
//
//   obs -> Delta(12) -> W0 -> Sigma/ReLU/Delta(64) -> W1 -> Sigma/ReLU/Delta(64) -> W2 -> Sigma(6) -> action
//
// Each Delta stage sends only changes of at least its threshold since the last
// value it communicated; each Sigma stage accumulates the weighted changes it
// receives, so the accumulator tracks W x_ref + b. In quantized mode every
// stored value and every message is an integer: activations use a per-tensor
// symmetric fixed-point scale, weights are 8-bit per layer, accumulators are
// 32-bit saturating, and graded spikes must fit in 24 bits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dense_net.hpp"
#include "errors.hpp"
#include "quant.hpp"

namespace sdflyer {

enum class SdnnMode { FloatReference, Quantized };
enum class SdnnSchedule { Flush, Pipelined };

inline std::string to_string(SdnnMode m) { return m == SdnnMode::FloatReference ? "float" : "quantized"; }

inline SdnnMode sdnn_mode_from_string(const std::string& s) {
  if (s == "float") return SdnnMode::FloatReference;
  if (s == "quantized") return SdnnMode::Quantized;
  fail(ErrorKind::Config, "unknown SDNN mode '" + s + "' (expected float or quantized)");
}

inline constexpr int kSpikeBits = 24;
inline constexpr std::int64_t kSpikeMax = (std::int64_t{1} << (kSpikeBits - 1)) - 1;
inline constexpr std::int64_t kSpikeMin = -(std::int64_t{1} << (kSpikeBits - 1));
inline constexpr std::int64_t kAccMax = std::numeric_limits<std::int32_t>::max();
inline constexpr std::int64_t kAccMin = std::numeric_limits<std::int32_t>::min();

template <class T>
struct Spike {
  std::uint32_t index;
  T value;

  bool operator==(const Spike&) const = default;
};

// Sorted by index, at most one entry per index.
template <class T>
using SpikeVector = std::vector<Spike<T>>;

template <class T>
struct DeltaState {
  std::vector<T> x_ref;
  T threshold{};

  DeltaState() = default;
  DeltaState(std::size_t dim, T thr) : x_ref(dim, T{}), threshold(thr) {}

  void reset() { std::fill(x_ref.begin(), x_ref.end(), T{}); }

  // Fires component i when x_i differs from its reference by at least the
  // threshold (and by a nonzero amount); the reference absorbs what was sent.
  void encode(std::span<const T> x, SpikeVector<T>& out) {
    out.clear();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T d = x[i] - x_ref[i];
      if (d == T{}) continue;
      if ((d < T{} ? -d : d) >= threshold) {
        out.push_back({static_cast<std::uint32_t>(i), d});
        x_ref[i] += d;
      }
    }
  }

  SpikeVector<T> encode(std::span<const T> x) {
    SpikeVector<T> out;
    encode(x, out);
    return out;
  }
};

template <class T>
struct SigmaState {
  std::vector<T> x_rec;

  SigmaState() = default;
  explicit SigmaState(std::size_t dim) : x_rec(dim, T{}) {}

  void reset() { std::fill(x_rec.begin(), x_rec.end(), T{}); }

  std::span<const T> decode(const SpikeVector<T>& spikes) {
    for (const auto& s : spikes) {
      require(s.index < x_rec.size(), ErrorKind::Integrity,
              "sigma_decode: spike index " + std::to_string(s.index) + " outside dimension " +
                  std::to_string(x_rec.size()));
      x_rec[s.index] += s.value;
    }
    return x_rec;
  }
};

struct OpCounters {
  std::uint64_t steps = 0;
  std::uint64_t synops = 0;          // nonzero spike x fan-out accumulations
  std::uint64_t dense_macs = 0;      // what a dense forward pass would have spent
  std::uint64_t neuron_updates = 0;  // neurons whose accumulator was touched
  std::uint64_t overflows = 0;       // saturation events in quantized mode
  std::vector<std::uint64_t> messages;  // spikes emitted per delta stage (input, hidden...)
  std::uint64_t message_slots = 0;      // steps x total delta-stage width

  std::uint64_t total_messages() const {
    std::uint64_t n = 0;
    for (auto m : messages) n += m;
    return n;
  }
  double message_density() const {
    return message_slots == 0 ? 0.0 : static_cast<double>(total_messages()) / static_cast<double>(message_slots);
  }
  void reset() {
    const std::size_t stages = messages.size();
    *this = OpCounters{};
    messages.assign(stages, 0);
  }
};

// Fixed-point rescale z * multiplier / 2^shift, rounded half away from zero.
struct Requant {
  std::int64_t multiplier = 1;
  int shift = 0;

  static Requant from_ratio(double ratio) {
    require(ratio > 0.0 && std::isfinite(ratio), ErrorKind::Config, "requant: ratio must be positive");
    Requant r;
    r.shift = 0;
    while (r.shift < 62 && ratio * std::ldexp(1.0, r.shift + 1) < 2147483648.0) ++r.shift;
    r.multiplier = std::max<std::int64_t>(1, round_half_away(ratio * std::ldexp(1.0, r.shift)));
    return r;
  }

  std::int64_t apply(std::int64_t z) const {
    // |z| < 2^31 and multiplier < 2^31, so the product fits in 63 bits.
    const std::int64_t mag = z < 0 ? -z : z;
    const std::int64_t half = r_half();
    const std::int64_t q = (mag * multiplier + half) >> shift;
    return z < 0 ? -q : q;
  }

 private:
  std::int64_t r_half() const { return shift == 0 ? 0 : (std::int64_t{1} << (shift - 1)); }
};

struct QuantConfig {
  int weight_bits = 8;
  int activation_bits = 16;
  double headroom = 2.0;  // calibration maximum is mapped to 1/headroom of the range

  void validate() const {
    require(weight_bits >= 2 && weight_bits <= 16, ErrorKind::Config, "quant: weight_bits must be in [2, 16]");
    require(activation_bits >= 2 && activation_bits <= kSpikeBits, ErrorKind::Config,
            "quant: activation_bits must be in [2, 24]");
    require(headroom >= 1.0, ErrorKind::Config, "quant: headroom must be >= 1");
  }
};

struct SdnnLayer {
  std::size_t in = 0, out = 0;
  std::vector<double> weight;  // row-major out x in, as in the source actor
  std::vector<double> bias;
  QuantSpec weight_spec;
  std::vector<std::int32_t> weight_q;  // row-major out x in
  std::vector<std::int32_t> bias_q;    // accumulator units: weight scale x input scale
  Requant requant;                     // accumulator units -> next activation spec
};

class SdnnNet {
 public:
  SdnnNet() = default;

  // Assembles a net from already-quantized parts (conversion or file load).
  SdnnNet(std::vector<std::size_t> dims, std::vector<SdnnLayer> layers, std::vector<QuantSpec> act_specs,
          std::vector<double> thresholds, QuantConfig qcfg, SdnnMode mode = SdnnMode::Quantized)
      : dims_(std::move(dims)),
        layers_(std::move(layers)),
        act_specs_(std::move(act_specs)),
        thresholds_(std::move(thresholds)),
        qcfg_(qcfg),
        mode_(mode) {
    validate();
    rebuild_runtime();
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::vector<SdnnLayer>& layers() const { return layers_; }
  // act_specs()[0] quantizes observations, [l] is the input spec of layer l,
  // and the last one is the action spec.
  const std::vector<QuantSpec>& act_specs() const { return act_specs_; }
  // One threshold per delta stage (input, then each hidden layer), real units.
  const std::vector<double>& thresholds() const { return thresholds_; }
  std::vector<std::int64_t> integer_thresholds() const {
    std::vector<std::int64_t> t(thresholds_.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = round_half_away(thresholds_[i] * act_specs_[i].scale);
    return t;
  }
  const QuantConfig& quant_config() const { return qcfg_; }
  SdnnMode mode() const { return mode_; }
  SdnnSchedule schedule() const { return schedule_; }

  void set_mode(SdnnMode m) {
    mode_ = m;
    reset_states();
  }
  void set_schedule(SdnnSchedule s) {
    schedule_ = s;
    reset_states();
  }
  void set_thresholds(std::vector<double> t) {
    thresholds_ = std::move(t);
    validate();
    rebuild_runtime();
  }
  void set_threshold(double t) { set_thresholds(std::vector<double>(thresholds_.size(), t)); }

  std::size_t num_hidden() const { return layers_.size() - 1; }

  // Layer-to-layer hops a pipelined execution needs before an observation
  // change reaches the output.
  std::size_t pipeline_latency() const { return num_hidden(); }

  std::size_t dense_macs_per_step() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.in * l.out;
    return n;
  }

  // Zeroes references, accumulators (then folds biases back in), buffered
  // spikes and the internal counters. Weights are untouched.
  void reset_states() {
    for (auto& d : delta_f_) d.reset();
    for (auto& d : delta_q_) d.reset();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      acc_f_[l].assign(layers_[l].bias.begin(), layers_[l].bias.end());
      acc_q_[l].assign(layers_[l].bias_q.begin(), layers_[l].bias_q.end());
      dirty_[l] = true;
    }
    for (auto& s : spikes_f_) s.clear();
    for (auto& s : spikes_q_) s.clear();
    counters_.reset();
  }

  // One control step: encode the observation, propagate, return the action.
  std::vector<double> step(std::span<const double> observation, OpCounters& counters) {
    require(observation.size() == dims_.front(), ErrorKind::Config, "sdnn_step: observation has wrong length");
    for (double v : observation) require(std::isfinite(v), ErrorKind::Config, "sdnn_step: non-finite observation");
    if (counters.messages.size() != thresholds_.size()) counters.messages.assign(thresholds_.size(), 0);
    OpCounters* sinks[2] = {&counters, &counters_};
    std::vector<double> action =
        mode_ == SdnnMode::Quantized ? step_quantized(observation, sinks) : step_float(observation, sinks);
    for (OpCounters* c : sinks) {
      ++c->steps;
      c->dense_macs += dense_macs_per_step();
      std::size_t width = 0;
      for (std::size_t i = 0; i < thresholds_.size(); ++i) width += dims_[i];
      c->message_slots += width;
    }
    return action;
  }

  std::vector<double> step(std::span<const double> observation) {
    OpCounters scratch;
    return step(observation, scratch);
  }

  // Counters since the last reset_states().
  const OpCounters& counters() const { return counters_; }

  // Spikes emitted by delta stage k during the latest step.
  const SpikeVector<double>& last_spikes_float(std::size_t k) const { return spikes_f_[k]; }
  const SpikeVector<std::int64_t>& last_spikes_quantized(std::size_t k) const { return spikes_q_[k]; }

  // Accumulator of layer l (hidden pre-activation or output), real units.
  std::vector<double> accumulator(std::size_t l) const {
    if (mode_ == SdnnMode::FloatReference) return acc_f_[l];
    std::vector<double> out(acc_q_[l].size());
    const double scale = layers_[l].weight_spec.scale * act_specs_[l].scale;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<double>(acc_q_[l][j]) / scale;
    return out;
  }

  // Reference values held by delta stage k, real units.
  std::vector<double> delta_reference(std::size_t k) const {
    if (mode_ == SdnnMode::FloatReference) return delta_f_[k].x_ref;
    std::vector<double> out(delta_q_[k].x_ref.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(delta_q_[k].x_ref[i]) / act_specs_[k].scale;
    return out;
  }

 private:
  void validate() const {
    require(dims_.size() >= 2 && layers_.size() == dims_.size() - 1, ErrorKind::Config,
            "SdnnNet: layer list does not match dims");
    require(act_specs_.size() == dims_.size(), ErrorKind::Config, "SdnnNet: need one activation spec per boundary");
    require(thresholds_.size() == dims_.size() - 1, ErrorKind::Config,
            "SdnnNet: need one threshold per delta stage (input + hidden layers)");
    for (double t : thresholds_) require(t >= 0.0 && std::isfinite(t), ErrorKind::Config, "SdnnNet: thresholds must be >= 0");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      require(L.in == dims_[l] && L.out == dims_[l + 1] && L.weight.size() == L.in * L.out &&
                  L.bias.size() == L.out && L.weight_q.size() == L.in * L.out && L.bias_q.size() == L.out,
              ErrorKind::Config, "SdnnNet: layer " + std::to_string(l) + " has inconsistent shapes");
      const std::int64_t wmax = (std::int64_t{1} << (qcfg_.weight_bits - 1)) - 1;
      for (auto w : L.weight_q)
        require(w >= -wmax - 1 && w <= wmax, ErrorKind::Integrity, "SdnnNet: integer weight outside weight bits");
    }
  }

  void rebuild_runtime() {
    const std::size_t L = layers_.size();
    wt_f_.assign(L, {});
    wt_q_.assign(L, {});
    for (std::size_t l = 0; l < L; ++l) {
      const auto& ly = layers_[l];
      wt_f_[l].resize(ly.in * ly.out);
      wt_q_[l].resize(ly.in * ly.out);
      for (std::size_t j = 0; j < ly.out; ++j)
        for (std::size_t i = 0; i < ly.in; ++i) {
          wt_f_[l][i * ly.out + j] = ly.weight[j * ly.in + i];
          wt_q_[l][i * ly.out + j] = ly.weight_q[j * ly.in + i];
        }
    }
    const auto ithr = integer_thresholds();
    delta_f_.clear();
    delta_q_.clear();
    for (std::size_t k = 0; k < thresholds_.size(); ++k) {
      delta_f_.emplace_back(dims_[k], thresholds_[k]);
      delta_q_.emplace_back(dims_[k], ithr[k]);
    }
    acc_f_.assign(L, {});
    acc_q_.assign(L, {});
    dirty_.assign(L, true);
    spikes_f_.assign(thresholds_.size(), {});
    spikes_q_.assign(thresholds_.size(), {});
    counters_.messages.assign(thresholds_.size(), 0);
    reset_states();
  }

  template <class T>
  static void count_spikes(OpCounters* const (&sinks)[2], std::size_t stage, const SpikeVector<T>& spikes,
                           std::size_t fanout) {
    for (OpCounters* c : sinks) {
      c->messages[stage] += spikes.size();
      c->synops += spikes.size() * fanout;
    }
  }

  // Layer order for one tick. Flush: bottom-up so a change crosses every layer
  // within the tick. Pipelined: top-down so each layer consumes what its
  // predecessor emitted on the previous tick.
  std::vector<std::size_t> layer_order() const {
    std::vector<std::size_t> order(layers_.size());
    for (std::size_t l = 0; l < order.size(); ++l)
      order[l] = schedule_ == SdnnSchedule::Flush ? l : order.size() - 1 - l;
    return order;
  }

  std::vector<double> step_float(std::span<const double> obs, OpCounters* const (&sinks)[2]) {
    delta_f_[0].encode(obs, spikes_f_[0]);
    count_spikes(sinks, 0, spikes_f_[0], layers_[0].out);
    const std::size_t L = layers_.size();
    std::vector<double> act;
    for (std::size_t l : layer_order()) {
      const auto& ly = layers_[l];
      auto& acc = acc_f_[l];
      const auto& in_spikes = spikes_f_[l];
      if (!in_spikes.empty()) {
        dirty_[l] = true;
        for (const auto& s : in_spikes) {
          const double* col = wt_f_[l].data() + static_cast<std::size_t>(s.index) * ly.out;
          for (std::size_t j = 0; j < ly.out; ++j) acc[j] += col[j] * s.value;
        }
        for (OpCounters* c : sinks) c->neuron_updates += ly.out;
      }
      if (l + 1 == L) continue;
      auto& out_spikes = spikes_f_[l + 1];
      if (!dirty_[l]) {
        out_spikes.clear();
        continue;
      }
      act.resize(ly.out);
      for (std::size_t j = 0; j < ly.out; ++j) act[j] = acc[j] > 0.0 ? acc[j] : 0.0;
      delta_f_[l + 1].encode(act, out_spikes);
      count_spikes(sinks, l + 1, out_spikes, layers_[l + 1].out);
      dirty_[l] = false;
    }
    return acc_f_[L - 1];
  }

  std::int64_t saturate(std::int64_t v, std::int64_t lo, std::int64_t hi, OpCounters* const (&sinks)[2]) {
    if (v < lo || v > hi) {
      for (OpCounters* c : sinks) ++c->overflows;
      return std::clamp(v, lo, hi);
    }
    return v;
  }

  std::vector<double> step_quantized(std::span<const double> obs, OpCounters* const (&sinks)[2]) {
    const std::size_t L = layers_.size();
    std::vector<std::int64_t> xq(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const double v = obs[i] * act_specs_[0].scale;
      if (v > static_cast<double>(act_specs_[0].max_int()) || v < static_cast<double>(act_specs_[0].min_int()))
        for (OpCounters* c : sinks) ++c->overflows;
      xq[i] = quantize(obs[i], act_specs_[0]);
    }
    delta_q_[0].encode(xq, spikes_q_[0]);
    check_spikes(spikes_q_[0]);
    count_spikes(sinks, 0, spikes_q_[0], layers_[0].out);

    std::vector<std::int64_t> act;
    for (std::size_t l : layer_order()) {
      const auto& ly = layers_[l];
      auto& acc = acc_q_[l];
      const auto& in_spikes = spikes_q_[l];
      if (!in_spikes.empty()) {
        dirty_[l] = true;
        for (const auto& s : in_spikes) {
          const std::int32_t* col = wt_q_[l].data() + static_cast<std::size_t>(s.index) * ly.out;
          for (std::size_t j = 0; j < ly.out; ++j)
            acc[j] = saturate(acc[j] + static_cast<std::int64_t>(col[j]) * s.value, kAccMin, kAccMax, sinks);
        }
        for (OpCounters* c : sinks) c->neuron_updates += ly.out;
      }
      if (l + 1 == L) continue;
      auto& out_spikes = spikes_q_[l + 1];
      if (!dirty_[l]) {
        out_spikes.clear();
        continue;
      }
      const QuantSpec& next = act_specs_[l + 1];
      act.resize(ly.out);
      for (std::size_t j = 0; j < ly.out; ++j)
        act[j] = acc[j] > 0 ? saturate(ly.requant.apply(acc[j]), 0, next.max_int(), sinks) : 0;
      delta_q_[l + 1].encode(act, out_spikes);
      check_spikes(out_spikes);
      count_spikes(sinks, l + 1, out_spikes, layers_[l + 1].out);
      dirty_[l] = false;
    }

    const auto& out_layer = layers_[L - 1];
    const QuantSpec& aspec = act_specs_[L];
    std::vector<double> action(out_layer.out);
    for (std::size_t j = 0; j < out_layer.out; ++j) {
      const std::int64_t a = saturate(out_layer.requant.apply(acc_q_[L - 1][j]), aspec.min_int(), aspec.max_int(), sinks);
      action[j] = dequantize(a, aspec);
    }
    return action;
  }

  static void check_spikes(const SpikeVector<std::int64_t>& spikes) {
    for (const auto& s : spikes)
      require(s.value >= kSpikeMin && s.value <= kSpikeMax, ErrorKind::Integrity,
              "sdnn: graded spike " + std::to_string(s.value) + " exceeds 24-bit payload");
  }

  std::vector<std::size_t> dims_;
  std::vector<SdnnLayer> layers_;
  std::vector<QuantSpec> act_specs_;
  std::vector<double> thresholds_;
  QuantConfig qcfg_;
  SdnnMode mode_ = SdnnMode::Quantized;
  SdnnSchedule schedule_ = SdnnSchedule::Flush;

  // Runtime state.
  std::vector<std::vector<double>> wt_f_;        // transposed: in x out (fan-out rows)
  std::vector<std::vector<std::int32_t>> wt_q_;  // transposed
  std::vector<DeltaState<double>> delta_f_;
  std::vector<DeltaState<std::int64_t>> delta_q_;
  std::vector<std::vector<double>> acc_f_;
  std::vector<std::vector<std::int64_t>> acc_q_;
  std::vector<bool> dirty_;
  std::vector<SpikeVector<double>> spikes_f_;
  std::vector<SpikeVector<std::int64_t>> spikes_q_;
  OpCounters counters_;
};

inline std::vector<double> sdnn_step(SdnnNet& net, std::span<const double> observation, OpCounters& counters) {
  return net.step(observation, counters);
}

// Per-boundary maxima of |activation| seen while running the dense actor on
// the calibration inputs: [observation, hidden..., output].
inline std::vector<double> calibrate(const DenseNet& actor, std::span<const std::vector<double>> inputs) {
  std::vector<double> mx(actor.dims().size(), 0.0);
  ForwardCache cache;
  for (const auto& x : inputs) {
    forward(actor, x, cache);
    for (std::size_t b = 0; b < mx.size(); ++b)
      for (double v : cache.post[b]) mx[b] = std::max(mx[b], std::abs(v));
  }
  return mx;
}

// Converts a ReLU actor: input -> Delta, hidden -> Sigma-Delta-ReLU, output -> Sigma.
// `thresholds` holds one value per delta stage or a single value for all.
inline SdnnNet convert(const DenseNet& actor, std::vector<double> thresholds, const QuantConfig& qcfg,
                       std::span<const std::vector<double>> calibration, SdnnMode mode = SdnnMode::Quantized) {
  require(actor.hidden_activation() == Activation::ReLU, ErrorKind::Conversion,
          "convert: hidden activation is '" + to_string(actor.hidden_activation()) +
              "'; only ReLU networks can be converted");
  qcfg.validate();
  const std::size_t L = actor.num_layers();
  if (thresholds.size() == 1) thresholds.assign(L, thresholds.front());
  require(thresholds.size() == L, ErrorKind::Config,
          "convert: expected 1 or " + std::to_string(L) + " thresholds, got " + std::to_string(thresholds.size()));

  const std::vector<double> maxima = calibrate(actor, calibration);
  const double act_max_int = static_cast<double>((std::int64_t{1} << (qcfg.activation_bits - 1)) - 1);
  std::vector<QuantSpec> act_specs;
  for (double m : maxima) {
    const double range = m > 0.0 ? qcfg.headroom * m : 1.0;
    act_specs.emplace_back(act_max_int / range, qcfg.activation_bits);
  }

  const double w_max_int = static_cast<double>((std::int64_t{1} << (qcfg.weight_bits - 1)) - 1);
  std::vector<SdnnLayer> layers(L);
  for (std::size_t l = 0; l < L; ++l) {
    auto& ly = layers[l];
    ly.in = actor.dims()[l];
    ly.out = actor.dims()[l + 1];
    const auto w = actor.weight(l);
    const auto b = actor.bias(l);
    ly.weight.assign(w.begin(), w.end());
    ly.bias.assign(b.begin(), b.end());
    double wmax = 0.0;
    for (double v : w) wmax = std::max(wmax, std::abs(v));
    ly.weight_spec = QuantSpec(wmax > 0.0 ? w_max_int / wmax : 1.0, std::min(qcfg.weight_bits, 24));
    ly.weight_q.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) ly.weight_q[i] = static_cast<std::int32_t>(quantize(w[i], ly.weight_spec));
    const double acc_scale = ly.weight_spec.scale * act_specs[l].scale;
    ly.bias_q.resize(b.size());
    for (std::size_t j = 0; j < b.size(); ++j)
      ly.bias_q[j] = static_cast<std::int32_t>(std::clamp(round_half_away(b[j] * acc_scale), kAccMin, kAccMax));
    ly.requant = Requant::from_ratio(act_specs[l + 1].scale / acc_scale);
  }
  return SdnnNet(actor.dims(), std::move(layers), std::move(act_specs), std::move(thresholds), qcfg, mode);
}

inline SdnnNet convert(const DenseNet& actor, double threshold, const QuantConfig& qcfg,
                       std::span<const std::vector<double>> calibration, SdnnMode mode = SdnnMode::Quantized) {
  return convert(actor, std::vector<double>{threshold}, qcfg, calibration, mode);
}

}  // namespace sdflyer
