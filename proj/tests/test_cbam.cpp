#include "lap/cbam.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace lap;

namespace {

Tensord random_tensor(const Shape& s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensord t(s);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

ChannelAttentionParams<double> random_channel(std::int64_t c, std::int64_t r, std::mt19937_64& rng) {
  ChannelAttentionParams<double> p = ChannelAttentionParams<double>::zeros(c, r);
  p.fc1.weight = random_tensor(p.fc1.weight.shape(), rng);
  p.fc1.bias = random_tensor(p.fc1.bias.shape(), rng);
  p.fc2.weight = random_tensor(p.fc2.weight.shape(), rng);
  p.fc2.bias = random_tensor(p.fc2.bias.shape(), rng);
  return p;
}

SpatialAttentionParams<double> random_spatial(std::mt19937_64& rng) {
  SpatialAttentionParams<double> p = SpatialAttentionParams<double>::zeros();
  p.conv.kernel = random_tensor(p.conv.kernel.shape(), rng, 0.2);
  p.conv.bias = random_tensor(p.conv.bias.shape(), rng);
  return p;
}

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

TEST(ChannelAttention, ZeroMlpGivesHalf) {
  std::mt19937_64 rng(1);
  const Tensord f = random_tensor(Shape{2, 4, 3, 3}, rng);
  const Tensord gate = channel_attention(f, ChannelAttentionParams<double>::zeros(4, 2));
  EXPECT_EQ(gate.shape(), (Shape{2, 4, 1, 1}));
  for (std::int64_t i = 0; i < gate.size(); ++i) EXPECT_EQ(gate[i], 0.5);
}

TEST(ChannelAttention, ConstantChannelsGiveDoubledMlp) {
  std::mt19937_64 rng(2);
  const ChannelAttentionParams<double> p = random_channel(4, 2, rng);
  Tensord f(Shape{1, 4, 3, 5});
  const double values[] = {0.25, -1.25, 2.0, 0.0};  // the mean of 15 copies is exact
  Tensord v(Shape{1, 4, 1, 1});
  for (std::int64_t c = 0; c < 4; ++c) {
    for (std::int64_t i = 0; i < 15; ++i) f.plane(0, c)[i] = values[c];
    v[c] = values[c];
  }
  EXPECT_EQ(reduce(f, ReduceAxes::Spatial, ReduceMode::Mean), reduce(f, ReduceAxes::Spatial, ReduceMode::Max));
  const Tensord mlp = linear_forward(relu(linear_forward(v, p.fc1)), p.fc2);
  const Tensord gate = channel_attention(f, p);
  for (std::int64_t c = 0; c < 4; ++c) EXPECT_NEAR(gate[c], sig(2.0 * mlp[c]), 1e-15);
}

TEST(ChannelAttention, HandSetMlp) {
  // C = 2, r = 1. F channel 0 = (1,2;3,4), channel 1 = (0,-1;-2,2).
  const Tensord f(Shape{1, 2, 2, 2}, {1, 2, 3, 4, 0, -1, -2, 2});
  ChannelAttentionParams<double> p = ChannelAttentionParams<double>::zeros(2, 1);
  p.fc1.weight = Tensord(Shape{2, 2, 1, 1}, {1, 0, 1, -1});
  p.fc1.bias = Tensord(Shape{1, 2, 1, 1}, {0, 0.5});
  p.fc2.weight = Tensord(Shape{2, 2, 1, 1}, {0.5, 0, -1, 1});
  p.fc2.bias = Tensord(Shape{1, 2, 1, 1}, {0, 0.25});
  // avg = (2.5, -0.25): hidden = relu(2.5, 2.5+0.25+0.5) = (2.5, 3.25); out = (1.25, -2.5+3.25+0.25) = (1.25, 1.0)
  // max = (4, 2):       hidden = relu(4, 4-2+0.5) = (4, 2.5);          out = (2.0, -4+2.5+0.25) = (2.0, -1.25)
  const Tensord gate = channel_attention(f, p);
  EXPECT_NEAR(gate[0], sig(1.25 + 2.0), 1e-15);
  EXPECT_NEAR(gate[1], sig(1.0 - 1.25), 1e-15);
}

TEST(ChannelAttention, ChannelMismatchThrows) {
  EXPECT_THROW(channel_attention(Tensord(Shape{1, 3, 2, 2}), ChannelAttentionParams<double>::zeros(4, 2)), ShapeError);
  EXPECT_THROW(ChannelAttentionParams<double>::zeros(6, 4), ShapeError);
}

TEST(ChannelAttention, BranchOrderDoesNotMatter) {
  std::mt19937_64 rng(3);
  const ChannelAttentionParams<double> p = random_channel(4, 2, rng);
  const Tensord f = random_tensor(Shape{2, 4, 3, 3}, rng);
  auto mlp = [&](const Tensord& v) { return linear_forward(relu(linear_forward(v, p.fc1)), p.fc2); };
  const Tensord a = mlp(reduce(f, ReduceAxes::Spatial, ReduceMode::Mean));
  const Tensord m = mlp(reduce(f, ReduceAxes::Spatial, ReduceMode::Max));
  EXPECT_EQ(sigmoid(add(a, m)), sigmoid(add(m, a)));
  EXPECT_EQ(channel_attention(f, p), sigmoid(add(a, m)));
}

TEST(ApplyChannelAttention, Examples) {
  std::mt19937_64 rng(4);
  const Tensord f = random_tensor(Shape{2, 3, 4, 4}, rng);
  const Tensord half = apply_channel_attention(f, Tensord::constant(Shape{2, 3, 1, 1}, 0.5));
  for (std::int64_t i = 0; i < f.size(); ++i) EXPECT_EQ(half[i], f[i] / 2);

  const Tensord saturated = apply_channel_attention(f, sigmoid(Tensord::constant(Shape{2, 3, 1, 1}, 1e3)));
  EXPECT_EQ(saturated, f);

  const Tensord gate = sigmoid(random_tensor(Shape{2, 3, 1, 1}, rng));
  EXPECT_EQ(apply_channel_attention(f, gate), elementwise_mul(f, gate));
  EXPECT_THROW(apply_channel_attention(f, Tensord(Shape{2, 1, 4, 4})), ShapeError);
}

TEST(SpatialAttention, ZeroConvGivesHalf) {
  std::mt19937_64 rng(5);
  const Tensord m = spatial_attention(random_tensor(Shape{2, 3, 5, 4}, rng), SpatialAttentionParams<double>::zeros());
  EXPECT_EQ(m.shape(), (Shape{2, 1, 5, 4}));
  for (std::int64_t i = 0; i < m.size(); ++i) EXPECT_EQ(m[i], 0.5);
}

TEST(SpatialAttention, SingleChannelPoolsAreTheInput) {
  std::mt19937_64 rng(6);
  const Tensord f = random_tensor(Shape{1, 1, 4, 4}, rng);
  EXPECT_EQ(reduce(f, ReduceAxes::Channel, ReduceMode::Mean).reshaped(f.shape()), f);
  EXPECT_EQ(reduce(f, ReduceAxes::Channel, ReduceMode::Max).reshaped(f.shape()), f);
}

TEST(SpatialAttention, OneHotKernelHandCase) {
  // F' is 1x2x3x3; avg map = mean of the two channels. Kernel picks the avg map
  // shifted one column right: out(y, x) = sigmoid(avg(y, x + 1)), zero padded.
  const Tensord f(Shape{1, 2, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9,  //
                                       3, 0, 1, 0, 1, 2, 5, 0, 3});
  SpatialAttentionParams<double> p = SpatialAttentionParams<double>::zeros(false);
  p.conv.kernel(0, 0, 3, 4) = 1.0;
  const Tensord m = spatial_attention(f, p);
  const double avg[3][3] = {{2, 1, 2}, {2, 3, 4}, {6, 4, 6}};
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      const double expected = x + 1 < 3 ? sig(avg[y][x + 1]) : 0.5;
      EXPECT_NEAR(m(0, 0, y, x), expected, 1e-15) << y << "," << x;
    }
  }
  // Same with the max map, shifted one row down.
  p = SpatialAttentionParams<double>::zeros(false);
  p.conv.kernel(0, 1, 2, 3) = 1.0;
  const Tensord mm = spatial_attention(f, p);
  const double mx[3][3] = {{3, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      const double expected = y >= 1 ? sig(mx[y - 1][x]) : 0.5;
      EXPECT_NEAR(mm(0, 0, y, x), expected, 1e-15) << y << "," << x;
    }
  }
}

TEST(Cbam, ZeroWeightsQuarterTheInput) {
  std::mt19937_64 rng(7);
  const Tensord f = random_tensor(Shape{2, 4, 5, 3}, rng);
  const Tensord out = cbam_forward(f, ChannelAttentionParams<double>::zeros(4, 2), SpatialAttentionParams<double>::zeros());
  for (std::int64_t i = 0; i < f.size(); ++i) EXPECT_EQ(out[i], f[i] / 4);
}

TEST(Cbam, SaturatedGatesPassInputThrough) {
  std::mt19937_64 rng(8);
  const Tensord f = random_tensor(Shape{1, 4, 4, 4}, rng);
  ChannelAttentionParams<double> cp = ChannelAttentionParams<double>::zeros(4, 2);
  cp.fc2.bias = Tensord::constant(cp.fc2.bias.shape(), 500.0);
  SpatialAttentionParams<double> sp = SpatialAttentionParams<double>::zeros();
  sp.conv.bias = Tensord::constant(sp.conv.bias.shape(), 1000.0);
  EXPECT_EQ(cbam_forward(f, cp, sp), f);
}

TEST(Cbam, EqualsCompositionOfSubOps) {
  std::mt19937_64 rng(9);
  const Tensord f = random_tensor(Shape{1, 4, 4, 4}, rng);
  const ChannelAttentionParams<double> cp = random_channel(4, 2, rng);
  const SpatialAttentionParams<double> sp = random_spatial(rng);
  const Tensord refined = apply_channel_attention(f, channel_attention(f, cp));
  const Tensord expected = elementwise_mul(refined, spatial_attention(refined, sp));
  EXPECT_LT(max_abs_diff(cbam_forward(f, cp, sp), expected), 1e-15);
}

TEST(Cbam, ZeroUpstreamGivesZeroGrads) {
  std::mt19937_64 rng(10);
  const Tensord f = random_tensor(Shape{2, 4, 3, 3}, rng);
  const ChannelAttentionParams<double> cp = random_channel(4, 2, rng);
  const SpatialAttentionParams<double> sp = random_spatial(rng);
  CbamCache<double> cache;
  cbam_forward(f, cp, sp, &cache);
  const CbamGrads<double> g = cbam_backward(Tensord(f.shape()), cp, sp, cache);
  EXPECT_TRUE((g.input.array() == 0).all());
  EXPECT_TRUE((g.fc1.weight.array() == 0).all());
  EXPECT_TRUE((g.fc2.bias.array() == 0).all());
  EXPECT_TRUE((g.conv.kernel.array() == 0).all());
}

TEST(Cbam, ConstantGateRegimeGradient) {
  // With all weights zero both gates are exactly 1/2. The input gradient is
  // 0.25 * upstream plus the terms through the gates; those vanish when the
  // gate derivatives see zero weights (fc2 and the 7x7 kernel are zero).
  std::mt19937_64 rng(11);
  const Tensord f = random_tensor(Shape{1, 3, 4, 4}, rng);
  ChannelAttentionParams<double> cp = ChannelAttentionParams<double>::zeros(3, 1);
  const SpatialAttentionParams<double> sp = SpatialAttentionParams<double>::zeros();
  const Tensord dy = random_tensor(f.shape(), rng);
  CbamCache<double> cache;
  cbam_forward(f, cp, sp, &cache);
  const CbamGrads<double> g = cbam_backward(dy, cp, sp, cache);
  for (std::int64_t i = 0; i < f.size(); ++i) EXPECT_NEAR(g.input[i], 0.25 * dy[i], 1e-15);
  // fc2 bias gradient: d/dlogit of sum(dy * F / 4 ... ) = sigmoid' * 2 branches * sum(dy*F*0.5).
  for (std::int64_t c = 0; c < 3; ++c) {
    double s = 0;
    for (std::int64_t i = 0; i < 16; ++i) s += dy.plane(0, c)[i] * f.plane(0, c)[i] * 0.5;
    EXPECT_NEAR(g.fc2.bias[c], 2 * 0.25 * s, 1e-12);
  }
}

TEST(Cbam, GatesBoundMagnitudeAndKeepSign) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensord f = random_tensor(Shape{1, 4, 3, 3}, rng, 3.0);
    CbamCache<double> cache;
    const Tensord out = cbam_forward(f, random_channel(4, 2, rng), random_spatial(rng), &cache);
    for (std::int64_t i = 0; i < f.size(); ++i) {
      EXPECT_LE(std::abs(out[i]), std::abs(cache.refined[i]));
      EXPECT_LE(std::abs(cache.refined[i]), std::abs(f[i]));
      EXPECT_TRUE(out[i] == 0 || (out[i] > 0) == (f[i] > 0));
    }
  }
}

TEST(Cbam, ChannelGateInvariantUnderSpatialPermutation) {
  std::mt19937_64 rng(13);
  const ChannelAttentionParams<double> cp = random_channel(4, 2, rng);
  const Tensord f = random_tensor(Shape{2, 4, 3, 4}, rng);
  std::vector<std::int64_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensord g(f.shape());
    for (std::int64_t n = 0; n < 2; ++n)
      for (std::int64_t c = 0; c < 4; ++c)
        for (std::int64_t i = 0; i < 12; ++i) g.plane(n, c)[i] = f.plane(n, c)[perm[static_cast<std::size_t>(i)]];
    // The mean sums in a different order, so exact equality needs an exact-sum input.
    Tensord fq = f, gq = g;
    fq.array() = (f.array() * 64).round() / 64;
    gq.array() = (g.array() * 64).round() / 64;
    EXPECT_EQ(channel_attention(fq, cp), channel_attention(gq, cp));
  }
}

TEST(CbamModule, ParametersAndShapes) {
  Cbam m(8, 4);
  std::mt19937_64 rng(14);
  m.init(rng);
  const ParamList params = parameters(m, "att");
  // fc1 8->2 with bias, fc2 2->8 with bias, 7x7x2 kernel plus bias.
  EXPECT_EQ(count_trainable(params), 8 * 2 + 2 + 2 * 8 + 8 + 98 + 1);
  const Tensord x = random_tensor(Shape{2, 8, 4, 4}, rng);
  EXPECT_EQ(m.forward(x, Mode::Train).shape(), x.shape());
  EXPECT_EQ(m.backward(x).shape(), x.shape());
  Cbam no_bias(8, 4, Activation::Elu, false);
  EXPECT_EQ(count_trainable(parameters(no_bias)), 8 * 2 + 2 + 2 * 8 + 8 + 98);
}
