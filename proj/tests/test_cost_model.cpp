#include "lap/cost_model.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace lap;
using namespace lap::cost;

TEST(CostFormulas, StandardParams) {
  EXPECT_EQ(params_standard(3, 64, 128), 73728);
  EXPECT_EQ(params_standard(1, 40, 40), 1600);
  EXPECT_EQ(params_standard(3, 1, 1), 9);
}

TEST(CostFormulas, StandardParamsMatchConstructedLayer) {
  Conv2d conv(64, 128, 3, 1, 1, 1, false);
  EXPECT_EQ(count_trainable(parameters(conv)), params_standard(3, 64, 128));
  Conv2d dw(64, 64, 3, 1, 1, 64, false);
  Conv2d pw(64, 128, 1, 1, 0, 1, false);
  EXPECT_EQ(count_trainable(parameters(dw)) + count_trainable(parameters(pw)), params_depthwise_separable(3, 64, 128));
}

TEST(CostFormulas, DepthwiseSeparableParams) {
  EXPECT_EQ(params_depthwise_separable(3, 64, 128), 576 + 8192);
  EXPECT_EQ(params_depthwise_separable(3, 64, 128), 8768);
  EXPECT_NEAR(8768.0 / 73728.0, 1.0 / 128 + 1.0 / 9, 1e-12);
  EXPECT_EQ(params_depthwise_separable(1, 40, 40), 40 + 1600);
}

TEST(CostFormulas, StandardFlops) {
  EXPECT_EQ(flops_standard(56, 3, 64, 128), 231211008);
  EXPECT_EQ(flops_standard(1, 1, 1, 1), 1);
  EXPECT_EQ(flops_standard(56, 3, 64, 256), 2 * flops_standard(56, 3, 64, 128));
  EXPECT_EQ(flops_standard(56, 56, 3, 64, 128), flops_standard(56, 3, 64, 128));
  EXPECT_EQ(flops_standard(64, 48, 3, 2, 5), 64 * 48 * 9 * 2 * 5);
}

TEST(CostFormulas, FactoredEqualsTwoTermSum) {
  EXPECT_EQ(flops_depthwise_sum(56, 3, 64), 1806336);
  EXPECT_EQ(flops_pointwise(56, 64, 128), 25690112);
  EXPECT_EQ(flops_depthwise_separable(56, 3, 64, 128), 27496448);
  EXPECT_EQ(flops_depthwise_separable(56, 3, 64, 128), 3136 * 64 * 137);
  EXPECT_EQ(flops_depthwise_single(56, 3) * 64, flops_depthwise_sum(56, 3, 64));

  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::int64_t> side(1, 128), k(1, 7), ch(1, 512);
  for (int i = 0; i < 1000; ++i) {
    const std::int64_t K = side(rng), D = k(rng), cin = ch(rng), cout = ch(rng);
    EXPECT_EQ(flops_depthwise_separable(K, D, cin, cout), flops_depthwise_sum(K, D, cin) + flops_pointwise(K, cin, cout));
  }
  EXPECT_EQ(flops_depthwise_separable(10, 1, 7, 7), 100 * 7 * 8);
}

TEST(CostFormulas, FlopRatioMatchesParamRatio) {
  const double ratio = static_cast<double>(flops_depthwise_separable(56, 3, 64, 128)) / flops_standard(56, 3, 64, 128);
  EXPECT_NEAR(ratio, 1.0 / 128 + 1.0 / 9, 1e-12);
}

TEST(CostFormulas, SeparableIsCheaperForRealKernels) {
  for (std::int64_t d = 2; d <= 7; ++d)
    for (std::int64_t cin = 1; cin <= 16; cin += 3)
      for (std::int64_t cout = 2; cout <= 64; cout *= 2) {
        EXPECT_LT(params_depthwise_separable(d, cin, cout), params_standard(d, cin, cout));
        EXPECT_LT(flops_depthwise_separable(8, d, cin, cout), flops_standard(8, d, cin, cout));
      }
}

TEST(CountNetwork, ParamsEqualEnumeration) {
  for (const char* preset : {"toy", "lap2", "hourglass2-standard"}) {
    const NetworkConfig c = build_lap_config(preset);
    LapNet net(c, 1);
    const CostReport r = count_network(c);
    EXPECT_EQ(r.totals.params, net.num_trainable()) << preset;
    std::int64_t params = 0, flops = 0;
    for (const LayerCost& l : r.layers) {
      EXPECT_GE(l.params, 0);
      EXPECT_GE(l.flops, 0);
      params += l.params;
      flops += l.flops;
    }
    EXPECT_EQ(params, r.totals.params);
    EXPECT_EQ(flops, r.totals.flops);
    EXPECT_EQ(r.totals.conv_weight_params + r.totals.other_params, r.totals.params);
  }
}

TEST(CountNetwork, VariantsEqualEnumeration) {
  NetworkConfig c = build_lap_config("toy");
  c.stacks = 3;
  c.blocks_per_level = 2;
  c.cbam_inside = false;
  c.activation = Activation::Relu;
  EXPECT_EQ(count_network(c).totals.params, LapNet(c, 1).num_trainable());
  c.block_kind = BlockKind::Standard;
  c.cbam_between_stacks = false;
  c.input_channels = 3;
  EXPECT_EQ(count_network(c).totals.params, LapNet(c, 1).num_trainable());
}

TEST(CountNetwork, PresetsNearPublishedTotals) {
  const CostReport lap = count_network(build_lap_config("lap2"));
  const CostReport hg = count_network(build_lap_config("hourglass2-standard"));
  EXPECT_EQ(lap.input_h, 256);
  EXPECT_EQ(lap.input_w, 192);
  EXPECT_GE(lap.totals.params, 2070000);
  EXPECT_LE(lap.totals.params, 2530000);
  EXPECT_GE(hg.totals.params, 6030000);
  EXPECT_LE(hg.totals.params, 7370000);
  EXPECT_LT(lap.totals.flops, hg.totals.flops);
  EXPECT_LT(count_network(build_lap_config("toy")).totals.params, 100000);
}

TEST(CountNetwork, InputSizeOverrideScalesFlopsOnly) {
  const NetworkConfig c = build_lap_config("toy");
  CountOptions half;
  half.input_h = 32;
  half.input_w = 32;
  const CostReport full = count_network(c);
  const CostReport small = count_network(c, half);
  EXPECT_EQ(full.totals.params, small.totals.params);
  // The attention MLP works on pooled vectors, so its cost ignores the input size.
  const auto spatial_flops = [](const CostReport& r) {
    std::int64_t f = 0;
    for (const LayerCost& l : r.layers) f += l.kind == "linear" ? 0 : l.flops;
    return f;
  };
  EXPECT_EQ(spatial_flops(full), 4 * spatial_flops(small));
  EXPECT_EQ(full.totals.flops - spatial_flops(full), small.totals.flops - spatial_flops(small));
  CountOptions with_elementwise;
  with_elementwise.include_elementwise = true;
  EXPECT_GT(count_network(c, with_elementwise).totals.flops, full.totals.flops);
}

TEST(Compare, PublishedTotals) {
  const Reduction r = compare(2.30e6, 6.70e6, 3.7e9, 9.08e9);
  EXPECT_NEAR(r.params_pct, 65.67, 0.05);
  EXPECT_NEAR(r.flops_pct, 59.27, 0.10);
  EXPECT_EQ(format_pct(r.params_pct), "65.67%");
  EXPECT_EQ(format_pct(r.flops_pct), "59.25%");
  const std::string check = format_published_check();
  EXPECT_NE(check.find("published reduction params 65.67%"), std::string::npos);
  EXPECT_NE(check.find("published reduction flops 59.25%"), std::string::npos);
}

TEST(Compare, IdenticalReportsGiveZero) {
  const CostReport r = count_network(build_lap_config("toy"));
  const Reduction red = compare(r.totals, r.totals);
  EXPECT_EQ(format_pct(red.params_pct), "0.00%");
  EXPECT_EQ(format_pct(red.flops_pct), "0.00%");
  EXPECT_THROW(reduction_pct(1.0, 0.0), std::invalid_argument);
}

TEST(Compare, RecordsListEveryLayer) {
  const CostReport r = count_network(build_lap_config("toy"));
  const std::string rec = format_records(r);
  std::istringstream is(rec);
  std::size_t lines = 0;
  for (std::string line; std::getline(is, line);) lines += line.rfind("layer ", 0) == 0;
  EXPECT_EQ(lines, r.layers.size());
}
