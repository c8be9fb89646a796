#include "lap/heatmap.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

using namespace lap;

namespace {

KeypointSet one_joint(double x, double y, bool visible = true) {
  KeypointSet k;
  k.joints.push_back({x, y, visible, 1.0});
  return k;
}

}  // namespace

TEST(Schema, CocoAndMpiiJointLists) {
  const KeypointSchema& coco = coco17_schema();
  const KeypointSchema& mpii = mpii16_schema();
  EXPECT_EQ(coco.size(), 17);
  EXPECT_EQ(mpii.size(), 16);
  EXPECT_EQ(coco.joints.front(), "nose");
  for (const char* j : {"left_eye", "right_eye", "left_ear", "right_ear", "left_shoulder", "right_shoulder",
                        "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hip", "right_hip",
                        "left_knee", "right_knee", "left_ankle", "right_ankle"}) {
    EXPECT_GE(coco.index_of(j), 0) << j;
  }
  for (const char* j : {"head", "neck", "pelvis", "thorax", "left_shoulder", "right_hip", "left_ankle"}) {
    EXPECT_GE(mpii.index_of(j), 0) << j;
  }
  EXPECT_EQ(std::set<std::string>(coco.joints.begin(), coco.joints.end()).size(), 17u);
  EXPECT_EQ(std::set<std::string>(mpii.joints.begin(), mpii.joints.end()).size(), 16u);
  EXPECT_EQ(coco.index_of("tail"), -1);
}

TEST(Schema, FlipPairsAreInvolutionsBetweenSides) {
  for (const KeypointSchema* s : {&coco17_schema(), &mpii16_schema()}) {
    for (int j = 0; j < s->size(); ++j) {
      const int p = s->flip_partner(j);
      EXPECT_EQ(s->flip_partner(p), j);
      const std::string& a = s->joints[static_cast<std::size_t>(j)];
      const std::string& b = s->joints[static_cast<std::size_t>(p)];
      if (p != j) {
        EXPECT_EQ(a.substr(a.find('_')), b.substr(b.find('_')));
        EXPECT_NE(a.substr(0, 4), b.substr(0, 4));
      } else {
        EXPECT_EQ(a.find("left"), std::string::npos);
        EXPECT_EQ(a.find("right"), std::string::npos);
      }
    }
  }
}

TEST(Encode, PeakAndSigmaFalloff) {
  const HeatmapStack h = encode(one_joint(5, 5), 12, 12, 2.0);
  EXPECT_EQ(h.maps.shape(), (Shape{1, 1, 12, 12}));
  EXPECT_EQ(h.maps(0, 0, 5, 5), 1.0);
  EXPECT_NEAR(h.maps(0, 0, 5, 7), std::exp(-0.5), 1e-9);
  EXPECT_NEAR(h.maps(0, 0, 3, 5), 0.6065307, 1e-7);
  EXPECT_EQ(h.maps.array().maxCoeff(), 1.0);
  EXPECT_GE(h.maps.array().minCoeff(), 0.0);
}

TEST(Encode, InvisibleJointIsZeroMap) {
  const HeatmapStack h = encode(one_joint(5, 5, false), 8, 8);
  EXPECT_TRUE((h.maps.array() == 0).all());
}

TEST(Encode, OutOfFrameLeavesTailsOnly) {
  const HeatmapStack near = encode(one_joint(-2, 3), 8, 8);
  EXPECT_GT(near.maps.array().maxCoeff(), 0.0);
  EXPECT_LT(near.maps.array().maxCoeff(), 1.0);
  const HeatmapStack far = encode(one_joint(500, 500), 8, 8);
  EXPECT_TRUE((far.maps.array() == 0).all());
}

TEST(Encode, OffCentrePeakBound) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(4.0, 12.0);
  const double sigma = 2.0;
  for (int i = 0; i < 100; ++i) {
    const HeatmapStack h = encode(one_joint(u(rng), u(rng)), 16, 16, sigma);
    // Nearest pixel centre is within 0.5 px on each axis.
    EXPECT_GE(h.maps.array().maxCoeff(), std::exp(-0.5 * 0.5 / (sigma * sigma)));
  }
}

TEST(Mse, Examples) {
  const Tensord a = Tensord::constant(Shape{2, 3, 4, 4}, 0.3);
  const MseResult same = mse_loss(a, a);
  EXPECT_EQ(same.loss, 0.0);
  EXPECT_TRUE((same.grad.array() == 0).all());

  const MseResult ones = mse_loss(Tensord(Shape{1, 2, 3, 5}), Tensord::ones(Shape{1, 2, 3, 5}));
  EXPECT_EQ(ones.loss, 1.0);

  const MseResult two = mse_loss(Tensord(Shape{1, 1, 1, 2}, {0.5, 0}), Tensord(Shape{1, 1, 1, 2}, {1, 0}));
  EXPECT_EQ(two.loss, 0.125);
  EXPECT_EQ(two.grad[0], -0.5);
  EXPECT_EQ(two.grad[1], 0.0);
  EXPECT_THROW(mse_loss(a, Tensord(Shape{2, 3, 4, 5})), ShapeError);
}

TEST(Mse, MaskedJointsLeaveSumAndCount) {
  Tensord pred(Shape{1, 2, 1, 2}, {1, 1, 5, 5});
  const Tensord gt(Shape{1, 2, 1, 2});
  const MseResult r = mse_loss(pred, gt, {1, 0});
  EXPECT_EQ(r.count, 2);
  EXPECT_EQ(r.loss, 1.0);
  EXPECT_EQ(r.grad[2], 0.0);
  EXPECT_EQ(r.grad[3], 0.0);
  EXPECT_THROW(mse_loss(pred, gt, {1}), ShapeError);
}

TEST(Mse, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensord pred(Shape{2, 3, 3, 3}), gt(Shape{2, 3, 3, 3});
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    pred[i] = d(rng);
    gt[i] = d(rng);
  }
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1, 0};
  const MseResult r = mse_loss(pred, gt, mask);
  const double h = 1e-5;
  double diff2 = 0, norm2 = 0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const double saved = pred[i];
    pred[i] = saved + h;
    const double plus = mse_loss(pred, gt, mask).loss;
    pred[i] = saved - h;
    const double minus = mse_loss(pred, gt, mask).loss;
    pred[i] = saved;
    const double numeric = (plus - minus) / (2 * h);
    diff2 += (numeric - r.grad[i]) * (numeric - r.grad[i]);
    norm2 += r.grad[i] * r.grad[i];
  }
  EXPECT_LT(std::sqrt(diff2 / norm2), 1e-8);
}

TEST(Mse, NonNegativeAndZeroOnlyWhenEqual) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    Tensord p(Shape{1, 2, 3, 3}), g(Shape{1, 2, 3, 3});
    for (std::int64_t i = 0; i < p.size(); ++i) {
      p[i] = u(rng);
      g[i] = u(rng);
    }
    EXPECT_GT(mse_loss(p, g).loss, 0.0);
  }
}

TEST(Decode, SinglePeak) {
  Tensord m(Shape{1, 1, 7, 8});
  m(0, 0, 3, 4) = 1.0;
  const auto k = decode(m);
  ASSERT_EQ(k.size(), 1u);
  EXPECT_EQ(k[0].joints[0].x, 4.0);
  EXPECT_EQ(k[0].joints[0].y, 3.0);
  EXPECT_EQ(k[0].joints[0].confidence, 1.0);
}

TEST(Decode, QuarterShiftTowardLargerNeighbour) {
  Tensord m(Shape{1, 1, 7, 8});
  m(0, 0, 3, 4) = 1.0;
  m(0, 0, 3, 5) = 0.5;
  m(0, 0, 3, 3) = 0.1;
  m(0, 0, 2, 4) = 0.3;
  const Keypoint k = decode(m)[0].joints[0];
  EXPECT_EQ(k.x, 4.25);
  EXPECT_EQ(k.y, 2.75);
}

TEST(Decode, AllZeroTieBreak) {
  const Keypoint k = decode(Tensord(Shape{1, 1, 5, 5}))[0].joints[0];
  EXPECT_EQ(k.x, 0.0);
  EXPECT_EQ(k.y, 0.0);
  EXPECT_EQ(k.confidence, 0.0);
  EXPECT_THROW(decode(Tensord(Shape{1, 1, 2, 5})), ShapeError);
}

TEST(Decode, RoundTripInteriorJoints) {
  std::mt19937_64 rng(4);
  const double sigma = 2.0;
  std::uniform_int_distribution<int> pos(6, 41);  // >= 3 sigma from the border of a 48x48 map
  for (int t = 0; t < 200; ++t) {
    KeypointSet k;
    for (int j = 0; j < 3; ++j) k.joints.push_back({static_cast<double>(pos(rng)), static_cast<double>(pos(rng))});
    const Keypoint got = decode(encode(k, 48, 48, sigma).maps)[0].joints[1];
    EXPECT_LE(std::abs(got.x - k.joints[1].x), 0.5);
    EXPECT_LE(std::abs(got.y - k.joints[1].y), 0.5);
  }
}

TEST(Flip, Rules) {
  const KeypointSchema& coco = coco17_schema();
  KeypointSet k;
  k.joints.resize(17);
  const int lw = coco.index_of("left_wrist"), rw = coco.index_of("right_wrist");
  k.joints[static_cast<std::size_t>(lw)] = {10, 20, true, 1};
  k.joints[0] = {31.5, 7, true, 1};
  const KeypointSet f = flip_keypoints(k, coco, 64);
  EXPECT_EQ(f.joints[static_cast<std::size_t>(rw)].x, 53.0);
  EXPECT_EQ(f.joints[static_cast<std::size_t>(rw)].y, 20.0);
  EXPECT_EQ(f.joints[0].x, 31.5);
  const KeypointSet back = flip_keypoints(f, coco, 64);
  for (int j = 0; j < 17; ++j) EXPECT_EQ(back.joints[static_cast<std::size_t>(j)], k.joints[static_cast<std::size_t>(j)]);
  EXPECT_THROW(flip_keypoints(one_joint(1, 1), coco, 64), ShapeError);
}

TEST(Frames, StrideMappingRoundTrips) {
  const KeypointSet img = one_joint(1.5, 33.5);
  const KeypointSet hm = image_to_heatmap(img, 4);
  EXPECT_EQ(hm.joints[0].x, 0.0);
  EXPECT_EQ(hm.joints[0].y, 8.0);
  EXPECT_EQ(heatmap_to_image(hm, 4).joints[0].x, 1.5);
  EXPECT_EQ(scale_keypoints(img, 0.5).joints[0].y, 16.75);
}

TEST(KeypointFile, WriteReadRoundTrip) {
  const KeypointSchema& schema = mpii16_schema();
  std::vector<KeypointSet> samples(2);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 64.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].id = "s" + std::to_string(i);
    for (int j = 0; j < 16; ++j) samples[i].joints.push_back({u(rng), u(rng), j % 3 != 0, u(rng) / 64.0});
  }
  std::stringstream ss;
  write_keypoints(ss, schema, samples, true);
  const auto back = read_keypoints(ss, schema);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].id, samples[i].id);
    for (int j = 0; j < 16; ++j) EXPECT_EQ(back[i].joints[static_cast<std::size_t>(j)], samples[i].joints[static_cast<std::size_t>(j)]);
  }
  std::istringstream bad("sample a\nelbow 1 2 1\n");
  EXPECT_THROW(read_keypoints(bad, schema), std::runtime_error);
}
