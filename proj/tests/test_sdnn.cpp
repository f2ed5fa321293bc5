#include <gtest/gtest.h>

#include <cmath>

#include "sdflyer/sdnn.hpp"

using namespace sdflyer;

namespace {

DenseNet random_actor(SeededRng& rng, std::vector<std::size_t> dims = {12, 64, 64, 6}) {
  DenseNet net(std::move(dims));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double s = 1.0 / std::sqrt(static_cast<double>(net.dims()[l]));
    for (double& w : net.weight(l)) w = rng.normal() * s;
    for (double& b : net.bias(l)) b = rng.normal() * 0.1;
  }
  return net;
}

std::vector<std::vector<double>> random_stream(SeededRng& rng, std::size_t steps, std::size_t dim, double step_sd) {
  std::vector<std::vector<double>> out;
  std::vector<double> x(dim);
  for (auto& v : x) v = rng.uniform(-0.5, 0.5);
  for (std::size_t t = 0; t < steps; ++t) {
    for (auto& v : x) v += step_sd * rng.normal();
    out.push_back(x);
  }
  return out;
}

std::vector<double> dense(const DenseNet& net, const std::vector<double>& x) {
  ForwardCache c;
  const auto y = forward(net, x, c);
  return {y.begin(), y.end()};
}

}  // namespace

TEST(Delta, ThresholdExample) {
  DeltaState<double> d(1, 0.1);
  const double xs[] = {0.0, 0.05, 0.2};
  EXPECT_TRUE(d.encode(std::span<const double>(&xs[0], 1)).empty());
  EXPECT_TRUE(d.encode(std::span<const double>(&xs[1], 1)).empty());
  const auto s = d.encode(std::span<const double>(&xs[2], 1));
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].index, 0u);
  EXPECT_EQ(s[0].value, 0.2);
  EXPECT_EQ(d.x_ref[0], 0.2);
}

TEST(Delta, FiresAtEquality) {
  DeltaState<std::int64_t> d(1, 5);
  const std::int64_t x = 5;
  EXPECT_EQ(d.encode(std::span<const std::int64_t>(&x, 1)).size(), 1u);
}

TEST(Delta, ZeroThresholdSendsEveryChange) {
  DeltaState<double> d(2, 0.0);
  const std::vector<double> a{0.3, 0.0}, b{0.3, -1e-9}, c{0.1, -1e-9};
  auto s = d.encode(a);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].value, 0.3);
  s = d.encode(b);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].index, 1u);
  s = d.encode(c);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].value, 0.1 - 0.3);
}

TEST(Delta, ConstantInputFiresOnce) {
  DeltaState<double> d(3, 0.1);
  const std::vector<double> x{0.5, 0.05, -0.2};
  const auto first = d.encode(x);
  ASSERT_EQ(first.size(), 2u);
  EXPECT_EQ(first[0].index, 0u);
  EXPECT_EQ(first[1].index, 2u);
  for (int i = 0; i < 10; ++i) EXPECT_TRUE(d.encode(x).empty());
}

TEST(Delta, ReferenceAccumulatesSpikes) {
  SeededRng rng(1);
  DeltaState<double> d(4, 0.05);
  std::vector<double> sum(4, 0.0);
  for (const auto& x : random_stream(rng, 300, 4, 0.03)) {
    for (const auto& s : d.encode(x)) sum[s.index] += s.value;
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(sum[i], d.x_ref[i]);
  }
}

TEST(Sigma, EmptySpikesLeaveStateUnchanged) {
  SigmaState<double> s(3);
  s.x_rec = {1, 2, 3};
  s.decode({});
  EXPECT_EQ(s.x_rec, (std::vector<double>{1, 2, 3}));
}

TEST(Sigma, OutOfRangeIndexIsIntegrityFault) {
  SigmaState<std::int64_t> s(3);
  try {
    s.decode({{3, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Integrity);
  }
}

TEST(SigmaDelta, ZeroThresholdReconstructsExactly) {
  SeededRng rng(2);
  DeltaState<std::int64_t> d(8, 0);
  SigmaState<std::int64_t> s(8);
  for (int t = 0; t < 500; ++t) {
    std::vector<std::int64_t> x(8);
    for (auto& v : x) v = static_cast<std::int64_t>(rng.uniform_index(2001)) - 1000;
    s.decode(d.encode(x));
    EXPECT_EQ(s.x_rec, x);
  }
}

TEST(SigmaDelta, ReconstructionErrorBelowThreshold) {
  SeededRng rng(3);
  for (double thr : {0.01, 0.1, 1.0}) {
    for (int trial = 0; trial < 20; ++trial) {
      DeltaState<double> d(16, thr);
      SigmaState<double> s(16);
      const double sd = thr * rng.uniform(0.05, 3.0);
      for (const auto& x : random_stream(rng, 200, 16, sd)) {
        const auto rec = s.decode(d.encode(x));
        for (std::size_t i = 0; i < 16; ++i) EXPECT_LT(std::abs(rec[i] - x[i]), thr);
      }
    }
  }
}

TEST(Requant, ApproximatesRatioWithinHalfUnit) {
  SeededRng rng(4);
  for (int i = 0; i < 2000; ++i) {
    const double ratio = std::exp(rng.uniform(-12, 3));
    const Requant r = Requant::from_ratio(ratio);
    EXPECT_GE(r.multiplier, std::int64_t{1} << 30);
    EXPECT_LT(r.multiplier, std::int64_t{1} << 31);
    const auto z = static_cast<std::int64_t>(rng.uniform(-2e9, 2e9));
    const double exact = static_cast<double>(z) * ratio;
    EXPECT_LE(std::abs(static_cast<double>(r.apply(z)) - exact), 0.5 + std::abs(exact) * 1e-9 + 1e-9);
    EXPECT_EQ(r.apply(-z), -r.apply(z));
  }
  EXPECT_THROW(Requant::from_ratio(0.0), Error);
}

namespace {
std::vector<std::vector<double>> calibration_for(SeededRng& rng) { return random_stream(rng, 400, 12, 0.1); }
}  // namespace

TEST(Convert, ZeroThresholdFloatMatchesDense) {
  SeededRng rng(5);
  for (int n = 0; n < 10; ++n) {
    const DenseNet actor = random_actor(rng);
    const auto calib = calibration_for(rng);
    SdnnNet net = convert(actor, 0.0, QuantConfig{}, calib, SdnnMode::FloatReference);
    double worst = 0.0;
    for (const auto& x : random_stream(rng, 200, 12, 0.1)) {
      const auto y = net.step(x);
      const auto ref = dense(actor, x);
      for (std::size_t j = 0; j < 6; ++j) worst = std::max(worst, std::abs(y[j] - ref[j]));
    }
    EXPECT_LE(worst, 1e-5);
  }
}

TEST(Convert, QuantizedWeightsWithinHalfLsb) {
  SeededRng rng(6);
  const DenseNet actor = random_actor(rng);
  const auto calib = calibration_for(rng);
  const SdnnNet net = convert(actor, 0.1, QuantConfig{}, calib);
  for (const auto& ly : net.layers()) {
    double wmax = 0.0;
    for (double w : ly.weight) wmax = std::max(wmax, std::abs(w));
    EXPECT_DOUBLE_EQ(ly.weight_spec.scale, 127.0 / wmax);
    for (std::size_t i = 0; i < ly.weight.size(); ++i) {
      EXPECT_LE(std::abs(ly.weight_q[i]), 127);
      EXPECT_LE(std::abs(dequantize(ly.weight_q[i], ly.weight_spec) - ly.weight[i]), 0.5 / ly.weight_spec.scale + 1e-15);
    }
  }
}

TEST(Convert, ThresholdsStoredInRealUnitsAndConvertedByScale) {
  SeededRng rng(7);
  const DenseNet actor = random_actor(rng);
  const auto calib = calibration_for(rng);
  const SdnnNet net = convert(actor, 0.1, QuantConfig{}, calib);
  ASSERT_EQ(net.thresholds().size(), 3u);
  const auto it = net.integer_thresholds();
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(net.thresholds()[k], 0.1);
    EXPECT_EQ(it[k], round_half_away(0.1 * net.act_specs()[k].scale));
  }
}

TEST(Convert, ZeroNetworkGivesZeroActions) {
  SeededRng rng(8);
  const DenseNet actor({12, 64, 64, 6});
  const auto calib = calibration_for(rng);
  for (auto mode : {SdnnMode::FloatReference, SdnnMode::Quantized}) {
    SdnnNet net = convert(actor, 0.1, QuantConfig{}, calib, mode);
    for (const auto& x : random_stream(rng, 50, 12, 0.3))
      for (double a : net.step(x)) EXPECT_EQ(a, 0.0);
  }
}

TEST(Convert, RefusesNonReluSource) {
  SeededRng rng(9);
  const DenseNet actor({12, 64, 64, 6}, Activation::Tanh);
  const auto calib = calibration_for(rng);
  try {
    convert(actor, 0.1, QuantConfig{}, calib);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Conversion);
  }
}

TEST(Convert, WrongThresholdCountIsConfigFault) {
  SeededRng rng(10);
  const DenseNet actor = random_actor(rng);
  const auto calib = calibration_for(rng);
  EXPECT_THROW(convert(actor, std::vector<double>{0.1, 0.1}, QuantConfig{}, calib), Error);
  EXPECT_NO_THROW(convert(actor, std::vector<double>{0.0, 0.1, 0.2}, QuantConfig{}, calib));
}

TEST(Runtime, QuantizedZeroThresholdTracksDense) {
  SeededRng rng(11);
  const DenseNet actor = random_actor(rng);
  const auto calib = calibration_for(rng);
  SdnnNet net = convert(actor, 0.0, QuantConfig{}, calib);
  double worst = 0.0, span = 0.0;
  for (std::size_t t = 0; t < 200; ++t) {
    const auto& x = calib[t];
    const auto y = net.step(x);
    const auto ref = dense(actor, x);
    for (std::size_t j = 0; j < 6; ++j) {
      worst = std::max(worst, std::abs(y[j] - ref[j]));
      span = std::max(span, std::abs(ref[j]));
    }
  }
  EXPECT_LE(worst, 0.02 * span);
  EXPECT_EQ(net.counters().overflows, 0u);
}

TEST(Runtime, HiddenReferencesStayWithinThresholdOfActivations) {
  SeededRng rng(12);
  const DenseNet actor = random_actor(rng);
  const auto calib = calibration_for(rng);
  for (double thr : {0.01, 0.1, 1.0}) {
    SdnnNet net = convert(actor, thr, QuantConfig{}, calib, SdnnMode::FloatReference);
    for (const auto& x : random_stream(rng, 200, 12, 0.05)) {
      net.step(x);
      const auto in_ref = net.delta_reference(0);
      for (std::size_t i = 0; i < 12; ++i) EXPECT_LT(std::abs(in_ref[i] - x[i]), thr);
      for (std::size_t l = 0; l + 1 < net.layers().size(); ++l) {
        const auto acc = net.accumulator(l);
        const auto ref = net.delta_reference(l + 1);
        for (std::size_t j = 0; j < acc.size(); ++j) EXPECT_LT(std::abs(ref[j] - std::max(acc[j], 0.0)), thr);
      }
    }
  }
}

TEST(Runtime, RepeatedObservationStopsHiddenTraffic) {
  SeededRng rng(13);
  const DenseNet actor = random_actor(rng);
  const auto calib = calibration_for(rng);
  for (auto mode : {SdnnMode::FloatReference, SdnnMode::Quantized}) {
    SdnnNet net = convert(actor, 0.1, QuantConfig{}, calib, mode);
    const std::vector<double> x = calib[7];
    OpCounters first;
    const auto y0 = net.step(x, first);
    EXPECT_GT(first.synops, 0u);
    for (int t = 0; t < 20; ++t) {
      OpCounters c;
      EXPECT_EQ(net.step(x, c), y0);
      EXPECT_EQ(c.synops, 0u);
      EXPECT_EQ(c.total_messages(), 0u);
    }
  }
}

TEST(Runtime, SlowRampHasLowMessageDensity) {
  SeededRng rng(14);
  const DenseNet actor = random_actor(rng);
  const auto calib = calibration_for(rng);
  SdnnNet net = convert(actor, 0.1, QuantConfig{}, calib);
  std::vector<double> x(12);
  for (auto& v : x) v = rng.uniform(-0.3, 0.3);
  OpCounters c;
  for (int t = 0; t < 200; ++t) {
    for (std::size_t i = 0; i < 12; ++i) x[i] += 0.002 * (i % 2 ? 1.0 : -1.0);
    net.step(x, c);
  }
  EXPECT_LE(c.message_density(), 0.20);
  EXPECT_LT(c.synops, c.dense_macs);
}

TEST(Runtime, DoublingThresholdNeverAddsSpikes) {
  SeededRng rng(15);
  int strictly_fewer = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const DenseNet actor = random_actor(rng);
    const auto calib = calibration_for(rng);
    const double thr = rng.uniform(0.01, 0.2);
    const auto stream = random_stream(rng, 200, 12, rng.uniform(0.01, 0.1));
    for (auto mode : {SdnnMode::FloatReference, SdnnMode::Quantized}) {
      SdnnNet lo = convert(actor, thr, QuantConfig{}, calib, mode);
      SdnnNet hi = convert(actor, 2 * thr, QuantConfig{}, calib, mode);
      OpCounters clo, chi;
      for (const auto& x : stream) {
        lo.step(x, clo);
        hi.step(x, chi);
      }
      EXPECT_LE(chi.total_messages(), clo.total_messages()) << "trial " << trial << " thr " << thr;
      strictly_fewer += chi.total_messages() < clo.total_messages();
    }
  }
  EXPECT_GT(strictly_fewer, 60);
}

TEST(Runtime, IntegerClosureAndCounterConsistency) {
  SeededRng rng(16);
  const DenseNet actor = random_actor(rng);
  const auto calib = calibration_for(rng);
  SdnnNet net = convert(actor, 0.05, QuantConfig{}, calib);
  OpCounters c;
  for (const auto& x : random_stream(rng, 300, 12, 0.1)) {
    net.step(x, c);
    for (std::size_t k = 0; k < net.thresholds().size(); ++k)
      for (const auto& s : net.last_spikes_quantized(k)) {
        EXPECT_GE(s.value, kSpikeMin);
        EXPECT_LE(s.value, kSpikeMax);
        EXPECT_NE(s.value, 0);
      }
    EXPECT_LE(c.synops, c.dense_macs);
  }
  for (const auto& ly : net.layers())
    for (auto b : ly.bias_q) {
      EXPECT_GE(b, kAccMin);
      EXPECT_LE(b, kAccMax);
    }
  EXPECT_EQ(c.steps, 300u);
  EXPECT_EQ(c.dense_macs, 300u * (12 * 64 + 64 * 64 + 64 * 6));
  EXPECT_EQ(c.message_slots, 300u * (12 + 64 + 64));
}

TEST(Runtime, SynopsEqualDenseOnlyWhenEverythingSpikes) {
  SeededRng rng(17);
  DenseNet actor({3, 4, 2});
  for (double& w : actor.weight(0)) w = 1.0;
  for (double& b : actor.bias(0)) b = 0.0;
  for (double& w : actor.weight(1)) w = 1.0;
  const std::vector<std::vector<double>> calib{{1, 1, 1}, {30, 30, 30}};
  SdnnNet net = convert(actor, 0.0, QuantConfig{}, calib, SdnnMode::FloatReference);
  OpCounters c;
  for (int t = 1; t <= 10; ++t) net.step(std::vector<double>{double(t), double(t), double(t)}, c);
  EXPECT_EQ(c.synops, c.dense_macs);
  net.step(std::vector<double>{10, 10, 11}, c);
  EXPECT_LT(c.synops, c.dense_macs);
}

TEST(Runtime, DeterministicAcrossInstances) {
  SeededRng rng(18);
  const DenseNet actor = random_actor(rng);
  const auto calib = calibration_for(rng);
  SdnnNet a = convert(actor, 0.1, QuantConfig{}, calib), b = convert(actor, 0.1, QuantConfig{}, calib);
  OpCounters ca, cb;
  for (const auto& x : random_stream(rng, 200, 12, 0.1)) {
    EXPECT_EQ(a.step(x, ca), b.step(x, cb));
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(a.last_spikes_quantized(k), b.last_spikes_quantized(k));
  }
  EXPECT_EQ(ca.synops, cb.synops);
  EXPECT_EQ(ca.messages, cb.messages);
}

TEST(Runtime, ResetRestoresInitialBehaviour) {
  SeededRng rng(19);
  const DenseNet actor = random_actor(rng);
  const auto calib = calibration_for(rng);
  for (auto mode : {SdnnMode::FloatReference, SdnnMode::Quantized}) {
    SdnnNet net = convert(actor, 0.1, QuantConfig{}, calib, mode);
    const auto stream = random_stream(rng, 100, 12, 0.1);
    std::vector<std::vector<double>> first;
    for (const auto& x : stream) first.push_back(net.step(x));
    net.reset_states();
    for (std::size_t k = 0; k < 3; ++k)
      for (double r : net.delta_reference(k)) EXPECT_EQ(r, 0.0);
    EXPECT_EQ(net.counters().steps, 0u);
    for (std::size_t t = 0; t < stream.size(); ++t) EXPECT_EQ(net.step(stream[t]), first[t]);
  }
}

TEST(Runtime, FirstSpikeAfterResetEqualsInput) {
  SeededRng rng(20);
  const DenseNet actor = random_actor(rng);
  const auto calib = calibration_for(rng);
  SdnnNet net = convert(actor, 0.1, QuantConfig{}, calib, SdnnMode::FloatReference);
  net.step(calib[3]);
  net.reset_states();
  std::vector<double> x(12, 0.0);
  x[4] = 0.25;
  x[9] = 0.05;
  net.step(x);
  const auto& s = net.last_spikes_float(0);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].index, 4u);
  EXPECT_EQ(s[0].value, 0.25);
}

TEST(Runtime, BiasesFoldedAtReset) {
  SeededRng rng(21);
  const DenseNet actor = random_actor(rng);
  const auto calib = calibration_for(rng);
  const SdnnNet net = convert(actor, 0.1, QuantConfig{}, calib, SdnnMode::FloatReference);
  for (std::size_t l = 0; l < 3; ++l) {
    const auto acc = net.accumulator(l);
    const auto b = actor.bias(l);
    EXPECT_TRUE(std::equal(acc.begin(), acc.end(), b.begin()));
  }
}

TEST(Pipeline, LatencyIsHiddenLayerCount) {
  SeededRng rng(22);
  const std::vector<std::vector<double>> calib{std::vector<double>(12, 0.3)};
  EXPECT_EQ(convert(random_actor(rng, {12, 64, 6}), 0.1, QuantConfig{}, calib).pipeline_latency(), 1u);
  EXPECT_EQ(convert(random_actor(rng, {12, 64, 64, 6}), 0.1, QuantConfig{}, calib).pipeline_latency(), 2u);
  EXPECT_EQ(convert(random_actor(rng, {12, 64, 64, 64, 6}), 0.1, QuantConfig{}, calib).pipeline_latency(), 3u);
}

TEST(Pipeline, PipelinedOutputLagsByLatency) {
  SeededRng rng(23);
  for (std::vector<std::size_t> dims : {std::vector<std::size_t>{12, 64, 6}, {12, 64, 64, 6}, {12, 32, 32, 32, 6}}) {
    const DenseNet actor = random_actor(rng, dims);
    const auto calib = calibration_for(rng);
    SdnnNet net = convert(actor, 0.0, QuantConfig{}, calib, SdnnMode::FloatReference);
    net.set_schedule(SdnnSchedule::Pipelined);
    const std::size_t lag = net.pipeline_latency();
    const auto stream = random_stream(rng, 60, 12, 0.1);
    for (std::size_t t = 0; t < stream.size(); ++t) {
      const auto y = net.step(stream[t]);
      if (t < lag) continue;
      const auto ref = dense(actor, stream[t - lag]);
      for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(y[j], ref[j], 1e-9);
    }
  }
}

TEST(Mode, ParsesNames) {
  EXPECT_EQ(sdnn_mode_from_string("float"), SdnnMode::FloatReference);
  EXPECT_EQ(sdnn_mode_from_string("quantized"), SdnnMode::Quantized);
  EXPECT_THROW(sdnn_mode_from_string("int"), Error);
}
