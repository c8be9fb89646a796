#pragma once

// Analytic parameter and FLOP counts.
//
// FLOPs here are multiply-accumulates: one kernel element applied at one output
// position counts once. For non-square maps the K*K output area of the square
// formulas becomes H_out * W_out.

#include "lap/network.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lap::cost {

/// N_S = D_k^2 * C_in * C_out.
std::int64_t params_standard(std::int64_t kernel, std::int64_t in, std::int64_t out);
/// N_D = D_k^2 * C_in + C_in * C_out.
std::int64_t params_depthwise_separable(std::int64_t kernel, std::int64_t in, std::int64_t out);

/// F_S = K^2 * C_in * C_out * D_k^2, K the output side.
std::int64_t flops_standard(std::int64_t side, std::int64_t kernel, std::int64_t in, std::int64_t out);
std::int64_t flops_standard(std::int64_t out_h, std::int64_t out_w, std::int64_t kernel, std::int64_t in,
                            std::int64_t out);

/// F_single = K^2 * D_k^2, one depthwise filter on one channel.
std::int64_t flops_depthwise_single(std::int64_t side, std::int64_t kernel);
/// F_sum = K^2 * C_in * D_k^2, the whole depthwise stage.
std::int64_t flops_depthwise_sum(std::int64_t side, std::int64_t kernel, std::int64_t in);
/// F_p = K^2 * C_in * C_out, the pointwise stage.
std::int64_t flops_pointwise(std::int64_t side, std::int64_t in, std::int64_t out);

/// F_D = K^2 * C_in * (C_out + D_k^2), the factored form.
std::int64_t flops_depthwise_separable(std::int64_t side, std::int64_t kernel, std::int64_t in, std::int64_t out);
std::int64_t flops_depthwise_separable(std::int64_t out_h, std::int64_t out_w, std::int64_t kernel, std::int64_t in,
                                       std::int64_t out);

struct LayerCost {
  std::string name;
  std::string kind;  // conv, dwsep, bias, batchnorm, linear, elementwise
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

struct CostTotals {
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::int64_t conv_weight_params = 0;  // from the N_S / N_D formulas only
  std::int64_t other_params = 0;        // biases, batch norm, attention MLP

  friend bool operator==(const CostTotals&, const CostTotals&) = default;
};

struct Reduction {
  double params_pct = 0;
  double flops_pct = 0;
};

struct CostReport {
  std::string label;
  std::int64_t input_h = 0;
  std::int64_t input_w = 0;
  std::vector<LayerCost> layers;
  CostTotals totals;
};

struct CountOptions {
  std::optional<std::int64_t> input_h;
  std::optional<std::int64_t> input_w;
  bool include_elementwise = false;
};

/// Walks the architecture described by `config` layer by layer. The parameter
/// total equals the trainable scalar count of LapNet(config).
CostReport count_network(const NetworkConfig& config, const CountOptions& options = {});

/// 100 * (1 - ours / baseline), rounded to two decimals.
double reduction_pct(double ours, double baseline);
Reduction compare(const CostTotals& ours, const CostTotals& baseline);
Reduction compare(double ours_params, double baseline_params, double ours_flops, double baseline_flops);

std::string format_pct(double pct);

/// Human-readable table.
std::string format_table(const CostReport& report);
/// One `layer` record per line, then totals; see docs/formats.md.
std::string format_records(const CostReport& report);
std::string format_comparison(const CostReport& ours, const CostReport& baseline);
/// Comparison of the published LAP[x2] / Hourglass[x2] totals.
std::string format_published_check();

}  // namespace lap::cost
