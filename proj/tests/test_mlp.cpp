#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sdflyer/adam.hpp"
#include "sdflyer/dense_net.hpp"

using namespace sdflyer;

namespace {

DenseNet random_net(SeededRng& rng, std::vector<std::size_t> dims, double scale = 0.5) {
  DenseNet net(std::move(dims));
  for (double& p : net.params()) p = scale * rng.normal();
  return net;
}

std::vector<double> random_vec(SeededRng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Independent evaluation: plain triple loop over an explicit weight layout.
std::vector<double> naive_forward(const DenseNet& net, std::vector<double> x) {
  const auto& d = net.dims();
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    std::vector<double> y(d[l + 1]);
    for (std::size_t i = 0; i < d[l + 1]; ++i) {
      double acc = net.bias(l)[i];
      for (std::size_t k = 0; k < d[l]; ++k) acc += net.weight(l)[i * d[l] + k] * x[k];
      const bool last = l + 2 == d.size();
      y[i] = last ? acc : std::max(acc, 0.0);
    }
    x = y;
  }
  return x;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Forward, ZeroNetGivesZeroOutput) {
  DenseNet net({12, 64, 64, 6});
  SeededRng rng(1);
  const auto out = forward(net, random_vec(rng, 12));
  ASSERT_EQ(out.size(), 6u);
  for (double v : out) EXPECT_EQ(v, 0.0);
}

TEST(Forward, SingleLayerIdentityPassesNegativeValues) {
  DenseNet net({4, 4});
  for (std::size_t i = 0; i < 4; ++i) net.weight(0)[i * 4 + i] = 1.0;
  const std::vector<double> x{1, -1, 2.5, -3};
  EXPECT_EQ(forward(net, x), x);
}

TEST(Forward, MatchesNaiveOracle) {
  SeededRng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const DenseNet net = random_net(rng, {12, 64, 64, 6});
    const auto x = random_vec(rng, 12);
    const auto got = forward(net, x);
    const auto want = naive_forward(net, x);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Forward, DimensionMismatchIsConfigFault) {
  DenseNet net({12, 8, 6});
  std::vector<double> x(11, 0.0);
  try {
    forward(net, x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(Forward, PositiveHomogeneityOfZeroBiasLayer) {
  SeededRng rng(3);
  DenseNet net = random_net(rng, {5, 7, 3});
  for (double& b : net.bias(0)) b = 0.0;
  const auto x = random_vec(rng, 5);
  ForwardCache base;
  forward(net, x, base);
  const double c = 2.75;
  for (double& w : net.weight(0)) w *= c;
  ForwardCache scaled;
  forward(net, x, scaled);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(scaled.post[1][i], c * base.post[1][i], 1e-12);
}

TEST(LogProb, ModeDensity) {
  GaussianHead head(6, 0.0);
  std::vector<double> mean{0.3, -1, 2, 0, 0.5, 7};
  EXPECT_NEAR(log_prob(mean, head, mean), -3.0 * std::log(2.0 * std::numbers::pi), 1e-14);
}

TEST(LogProb, StrictlyDecreasesAwayFromMean) {
  GaussianHead head(6, -0.4);
  std::vector<double> mean(6, 0.1), a = mean;
  double prev = log_prob(mean, head, a);
  for (int i = 1; i < 50; ++i) {
    a[2] = mean[2] + 0.1 * i;
    const double lp = log_prob(mean, head, a);
    EXPECT_LT(lp, prev);
    prev = lp;
  }
}

TEST(LogProb, SliceIntegralMatchesMarginal) {
  // Integrating the 6-D density over one coordinate (composite Simpson) must
  // give the 5-D density of the remaining coordinates.
  GaussianHead head(6, 0.0);
  head.log_std = {-0.3, 0.2, -1.0, 0.5, 0.0, -0.7};
  const std::vector<double> mean{0.1, -0.2, 0.3, 0.0, 1.0, -1.0};
  std::vector<double> a{0.2, 0.1, 0.25, -0.4, 0.8, -0.9};
  const int k = 2;
  const double sd = std::exp(head.log_std[k]);
  const double lo = mean[k] - 12 * sd, hi = mean[k] + 12 * sd;
  const int n = 4000;
  const double h = (hi - lo) / n;
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    a[k] = lo + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    integral += w * std::exp(log_prob(mean, head, a));
  }
  integral *= h / 3.0;

  GaussianHead rest(5, 0.0);
  std::vector<double> m5, a5;
  for (int i = 0, j = 0; i < 6; ++i) {
    if (i == k) continue;
    rest.log_std[j++] = head.log_std[i];
    m5.push_back(mean[i]);
    a5.push_back(a[i]);
  }
  EXPECT_NEAR(integral, std::exp(log_prob(m5, rest, a5)), 1e-6);
}

TEST(Backward, ZeroOutputGradientGivesZeroGradients) {
  SeededRng rng(4);
  const DenseNet net = random_net(rng, {12, 64, 64, 6});
  ForwardCache cache;
  forward(net, random_vec(rng, 12), cache);
  std::vector<double> zero(6, 0.0);
  EXPECT_TRUE(backward(net, cache, zero).all_zero());
}

TEST(Backward, MissingCacheIsMisuse) {
  DenseNet net({3, 4, 2});
  ForwardCache empty;
  std::vector<double> g(2, 1.0);
  EXPECT_THROW(backward(net, empty, g), Error);
}

TEST(Backward, DeadReluBlocksUpstreamGradient) {
  // Hidden unit 0 has a large negative bias: its incoming weights get no gradient.
  SeededRng rng(5);
  DenseNet net = random_net(rng, {3, 4, 2});
  net.bias(0)[0] = -100.0;
  ForwardCache cache;
  forward(net, random_vec(rng, 3), cache);
  ASSERT_LT(cache.pre[1][0], 0.0);
  const GradientSet g = backward(net, cache, random_vec(rng, 2));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(g.net[net.layer_offset(0) + k], 0.0);
  EXPECT_EQ(g.net[net.layer_offset(0) + 12], 0.0);  // bias of unit 0
  EXPECT_EQ(g.net[net.layer_offset(1) + 0], 0.0);   // outgoing weight from unit 0 (its activation is 0)
}

TEST(Backward, MatchesCentralFiniteDifferences) {
  SeededRng rng(6);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> dims{2 + rng.uniform_index(6), 2 + rng.uniform_index(9), 2 + rng.uniform_index(9),
                                  1 + rng.uniform_index(4)};
    DenseNet net = random_net(rng, dims);
    const auto x = random_vec(rng, dims.front());
    const auto gout = random_vec(rng, dims.back());
    ForwardCache cache;
    forward(net, x, cache);
    GradientSet g = backward(net, cache, gout);
    std::vector<double> gin(dims.front());
    GradientSet scratch(net);
    backward(net, cache, gout, scratch.net, gin);
    for (std::size_t i = 0; i < net.num_params(); ++i) {
      const double keep = net.params()[i];
      net.params()[i] = keep + h;
      const double up = dot(forward(net, x), gout);
      net.params()[i] = keep - h;
      const double down = dot(forward(net, x), gout);
      net.params()[i] = keep;
      const double fd = (up - down) / (2 * h);
      EXPECT_NEAR(g.net[i], fd, std::max(1e-6, 1e-4 * std::abs(fd))) << "param " << i;
    }
    for (std::size_t k = 0; k < x.size(); ++k) {
      auto xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      const double fd = (dot(forward(net, xp), gout) - dot(forward(net, xm), gout)) / (2 * h);
      EXPECT_NEAR(gin[k], fd, std::max(1e-6, 1e-4 * std::abs(fd)));
    }
  }
}

TEST(Backward, TanhHiddenLayersAlsoDifferentiate) {
  SeededRng rng(7);
  DenseNet net({3, 5, 2}, Activation::Tanh);
  for (double& p : net.params()) p = 0.7 * rng.normal();
  const auto x = random_vec(rng, 3);
  const auto gout = random_vec(rng, 2);
  ForwardCache cache;
  forward(net, x, cache);
  const GradientSet g = backward(net, cache, gout);
  const double h = 1e-5;
  for (std::size_t i = 0; i < net.num_params(); ++i) {
    const double keep = net.params()[i];
    net.params()[i] = keep + h;
    const double up = dot(forward(net, x), gout);
    net.params()[i] = keep - h;
    const double down = dot(forward(net, x), gout);
    net.params()[i] = keep;
    EXPECT_NEAR(g.net[i], (up - down) / (2 * h), 1e-8);
  }
}

TEST(LogProbGrad, MatchesFiniteDifferences) {
  SeededRng rng(8);
  GaussianHead head(6, 0.0);
  for (double& v : head.log_std) v = 0.3 * rng.normal();
  auto mean = random_vec(rng, 6);
  const auto a = random_vec(rng, 6);
  std::vector<double> dm(6), dls(6);
  log_prob_grad(mean, head, a, dm, dls);
  const double h = 1e-6;
  for (std::size_t k = 0; k < 6; ++k) {
    auto mp = mean, mm = mean;
    mp[k] += h;
    mm[k] -= h;
    EXPECT_NEAR(dm[k], (log_prob(mp, head, a) - log_prob(mm, head, a)) / (2 * h), 1e-6);
    GaussianHead hp = head, hm = head;
    hp.log_std[k] += h;
    hm.log_std[k] -= h;
    EXPECT_NEAR(dls[k], (log_prob(mean, hp, a) - log_prob(mean, hm, a)) / (2 * h), 1e-6);
  }
}

TEST(GaussianHead, ClampsLogStd) {
  GaussianHead head(3, 0.0);
  head.log_std = {-30, 0.5, 9};
  head.clamp();
  EXPECT_EQ(head.log_std[0], -20.0);
  EXPECT_EQ(head.log_std[1], 0.5);
  EXPECT_EQ(head.log_std[2], 2.0);
}

TEST(OrthogonalInit, RowsOrthonormalTimesGain) {
  SeededRng rng(9);
  DenseNet net({12, 64, 64, 6});
  orthogonal_init(net, rng, std::sqrt(2.0), 0.01);
  // Output layer 6x64: rows orthonormal, scaled by 0.01.
  const auto w = net.weight(2);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      double d = 0;
      for (std::size_t k = 0; k < 64; ++k) d += w[i * 64 + k] * w[j * 64 + k];
      EXPECT_NEAR(d, i == j ? 1e-4 : 0.0, 1e-12);
    }
  // First layer 64x12: columns orthonormal, scaled by sqrt(2).
  const auto w0 = net.weight(0);
  for (std::size_t a = 0; a < 12; ++a)
    for (std::size_t b = 0; b < 12; ++b) {
      double d = 0;
      for (std::size_t k = 0; k < 64; ++k) d += w0[k * 12 + a] * w0[k * 12 + b];
      EXPECT_NEAR(d, a == b ? 2.0 : 0.0, 1e-12);
    }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<double> p{1.0, -2.0, 3.0}, g(3, 0.0);
  const auto before = p;
  AdamState st(3);
  for (int i = 0; i < 1000; ++i) adam_step(p, g, st, {});
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 1000);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{0.0}, g{1.0};
  AdamState st(1);
  AdamHyper hyper;
  hyper.lr = 0.01;
  adam_step(p, g, st, hyper);
  EXPECT_NEAR(p[0], -0.01, 1e-9);
}

TEST(Adam, ConvergesOnScalarQuadratic) {
  // loss = (x - 3)^2
  std::vector<double> x{-5.0}, g(1);
  AdamState st(1);
  AdamHyper hyper;
  hyper.lr = 1e-2;
  for (int i = 0; i < 4000; ++i) {
    g[0] = 2.0 * (x[0] - 3.0);
    adam_step(x, g, st, hyper);
  }
  EXPECT_NEAR(x[0], 3.0, 1e-3);
}
