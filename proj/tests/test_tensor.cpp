#include "lap/tensor.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace lap;

namespace {

Tensord random_tensor(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  Tensord t(s);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

}  // namespace

TEST(Tensor, ConstructionAndLayout) {
  Tensord t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120);
  t(1, 2, 3, 4) = 7.0;
  EXPECT_EQ(t[119], 7.0);
  t(0, 1, 0, 0) = 3.0;
  EXPECT_EQ(t[20], 3.0);
  EXPECT_THROW(Tensord(Shape{1, 1, 2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(Tensord(Shape{1, -1, 2, 2}), ShapeError);
}

TEST(Tensor, ShapeEqualityIsComponentwise) {
  EXPECT_EQ((Shape{1, 2, 3, 4}), (Shape{1, 2, 3, 4}));
  EXPECT_NE((Shape{1, 2, 3, 4}), (Shape{1, 2, 4, 3}));
}

TEST(Tensor, ChannelGate) {
  const Tensord a = Tensord::ones(Shape{1, 2, 2, 2});
  const Tensord gate(Shape{1, 2, 1, 1}, {0.5, 0.5});
  const Tensord out = elementwise_mul(a, gate);
  for (std::int64_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], 0.5);
}

TEST(Tensor, SpatialGateHandCase) {
  const Tensord a(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensord gate(Shape{1, 1, 2, 2}, {0, 1, 1, 0});
  const Tensord out = elementwise_mul(a, gate);
  EXPECT_EQ(out, Tensord(Shape{1, 1, 2, 2}, {0, 2, 3, 0}));
}

TEST(Tensor, SpatialGateBroadcastsOverChannels) {
  std::mt19937_64 rng(3);
  const Tensord a = random_tensor(Shape{2, 3, 2, 3}, rng);
  const Tensord gate = random_tensor(Shape{2, 1, 2, 3}, rng);
  const Tensord out = elementwise_mul(a, gate);
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t h = 0; h < 2; ++h)
        for (std::int64_t w = 0; w < 3; ++w) EXPECT_EQ(out(n, c, h, w), a(n, c, h, w) * gate(n, 0, h, w));
}

TEST(Tensor, MultiplyByOnesIsBitwiseIdentity) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensord a = random_tensor(Shape{2, 3, 4, 5}, rng);
    EXPECT_EQ(elementwise_mul(a, Tensord::ones(a.shape())), a);
  }
}

TEST(Tensor, GateShapeMismatchNamesBothShapes) {
  const Tensord a(Shape{1, 2, 3, 3});
  const Tensord b(Shape{1, 3, 1, 1});
  try {
    elementwise_mul(a, b);
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(1x2x3x3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(1x3x1x1)"), std::string::npos) << msg;
  }
}

TEST(Tensor, ReduceExamples) {
  const Tensord a(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(reduce(a, ReduceAxes::Spatial, ReduceMode::Mean)[0], 2.5);
  EXPECT_EQ(reduce(a, ReduceAxes::Spatial, ReduceMode::Max)[0], 4.0);

  Tensord two(Shape{1, 2, 2, 2});
  for (int i = 0; i < 4; ++i) {
    two[i] = 1;
    two[4 + i] = 3;
  }
  const Tensord mx = reduce(two, ReduceAxes::Channel, ReduceMode::Max);
  EXPECT_EQ(mx.shape(), (Shape{1, 1, 2, 2}));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(mx[i], 3.0);

  const Tensord pix(Shape{1, 2, 1, 2}, {0, 2, 4, 6});
  EXPECT_EQ(reduce(pix, ReduceAxes::Channel, ReduceMode::Mean), Tensord(Shape{1, 1, 1, 2}, {2, 4}));
}

TEST(Tensor, ReduceEmptyDomainThrows) {
  EXPECT_THROW(reduce(Tensord(Shape{1, 2, 0, 3}), ReduceAxes::Spatial, ReduceMode::Mean), ShapeError);
  EXPECT_THROW(reduce(Tensord(Shape{1, 0, 2, 2}), ReduceAxes::Channel, ReduceMode::Max), ShapeError);
}

TEST(Tensor, MeanTimesCountEqualsSum) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensord a = random_tensor(Shape{2, 3, 3, 4}, rng);
    const Tensord sm = reduce(a, ReduceAxes::Spatial, ReduceMode::Mean);
    for (std::int64_t n = 0; n < 2; ++n) {
      for (std::int64_t c = 0; c < 3; ++c) {
        double sum = 0;
        for (std::int64_t i = 0; i < 12; ++i) sum += a.plane(n, c)[i];
        EXPECT_NEAR(sm(n, c, 0, 0) * 12.0, sum, 1e-12);
      }
    }
    const Tensord cm = reduce(a, ReduceAxes::Channel, ReduceMode::Mean);
    for (std::int64_t n = 0; n < 2; ++n) {
      for (std::int64_t i = 0; i < 12; ++i) {
        double sum = 0;
        for (std::int64_t c = 0; c < 3; ++c) sum += a.plane(n, c)[i];
        EXPECT_NEAR(cm.plane(n, 0)[i] * 3.0, sum, 1e-12);
      }
    }
  }
}

TEST(Tensor, MeanBoundedByMinAndMax) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensord a = random_tensor(Shape{2, 4, 3, 3}, rng);
    for (ReduceAxes axes : {ReduceAxes::Spatial, ReduceAxes::Channel}) {
      const Tensord mean = reduce(a, axes, ReduceMode::Mean);
      const Tensord mx = reduce(a, axes, ReduceMode::Max);
      const Tensord mn = scale(reduce(scale(a, -1.0), axes, ReduceMode::Max), -1.0);
      for (std::int64_t i = 0; i < mean.size(); ++i) {
        EXPECT_LE(mn[i], mean[i] + 1e-15);
        EXPECT_LE(mean[i], mx[i] + 1e-15);
      }
    }
  }
}

TEST(Tensor, ConcatAndSliceChannels) {
  std::mt19937_64 rng(8);
  const Tensord a = random_tensor(Shape{2, 2, 3, 3}, rng);
  const Tensord b = random_tensor(Shape{2, 3, 3, 3}, rng);
  const Tensord ab = concat_channels(a, b);
  EXPECT_EQ(ab.shape(), (Shape{2, 5, 3, 3}));
  EXPECT_EQ(slice_channels(ab, 0, 2), a);
  EXPECT_EQ(slice_channels(ab, 2, 3), b);
  EXPECT_THROW(slice_channels(ab, 4, 2), ShapeError);
  EXPECT_THROW(concat_channels(a, Tensord(Shape{1, 1, 3, 3})), ShapeError);
}

TEST(Tensor, AddScaleReshape) {
  const Tensord a(Shape{1, 1, 1, 3}, {1, 2, 3});
  EXPECT_EQ(add(a, a), scale(a, 2.0));
  EXPECT_EQ(a.reshaped(Shape{3, 1, 1, 1}).shape(), (Shape{3, 1, 1, 1}));
  EXPECT_THROW(a.reshaped(Shape{2, 1, 1, 1}), ShapeError);
  EXPECT_THROW(add(a, Tensord(Shape{1, 1, 3, 1})), ShapeError);
  EXPECT_EQ(max_abs_diff(a, Tensord(Shape{1, 1, 1, 3}, {1, 2.5, 3})), 0.5);
}

TEST(Tensor, FloatCastRoundTripsRepresentableValues) {
  const Tensord a(Shape{1, 1, 1, 3}, {0.5, -1.25, 3.0});
  EXPECT_EQ(a.cast<float>().cast<double>(), a);
}
