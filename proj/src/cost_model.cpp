#include "lap/cost_model.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace lap::cost {

std::int64_t params_standard(std::int64_t kernel, std::int64_t in, std::int64_t out) {
  return kernel * kernel * in * out;
}

std::int64_t params_depthwise_separable(std::int64_t kernel, std::int64_t in, std::int64_t out) {
  return kernel * kernel * in + 1 * 1 * in * out;
}

std::int64_t flops_standard(std::int64_t out_h, std::int64_t out_w, std::int64_t kernel, std::int64_t in,
                            std::int64_t out) {
  return out_h * out_w * in * out * kernel * kernel;
}

std::int64_t flops_standard(std::int64_t side, std::int64_t kernel, std::int64_t in, std::int64_t out) {
  return flops_standard(side, side, kernel, in, out);
}

std::int64_t flops_depthwise_single(std::int64_t side, std::int64_t kernel) { return side * side * 1 * kernel * kernel; }

std::int64_t flops_depthwise_sum(std::int64_t side, std::int64_t kernel, std::int64_t in) {
  return side * side * in * kernel * kernel;
}

std::int64_t flops_pointwise(std::int64_t side, std::int64_t in, std::int64_t out) { return side * side * in * out; }

std::int64_t flops_depthwise_separable(std::int64_t out_h, std::int64_t out_w, std::int64_t kernel, std::int64_t in,
                                       std::int64_t out) {
  return out_h * out_w * in * (out + kernel * kernel);
}

std::int64_t flops_depthwise_separable(std::int64_t side, std::int64_t kernel, std::int64_t in, std::int64_t out) {
  return flops_depthwise_separable(side, side, kernel, in, out);
}

namespace {

struct Extent {
  std::int64_t h;
  std::int64_t w;
  std::int64_t area() const { return h * w; }
  Extent half() const { return {h / 2, w / 2}; }
};

/// Accumulates layer entries while walking the architecture.
class Walker {
 public:
  Walker(const NetworkConfig& c, bool elementwise) : c_(c), elementwise_(elementwise) {}

  std::vector<LayerCost> layers;

  void conv(const std::string& name, std::int64_t kernel, std::int64_t in, std::int64_t out, Extent o, bool bias) {
    layers.push_back({name + ".weight", "conv", params_standard(kernel, in, out), flops_standard(o.h, o.w, kernel, in, out)});
    if (bias) layers.push_back({name + ".bias", "bias", out, 0});
  }

  void batchnorm(const std::string& name, std::int64_t channels, Extent o) {
    layers.push_back({name, "batchnorm", 2 * channels, 0});
    eltwise(name + ".apply", channels * o.area());
  }

  void activation(const std::string& name, std::int64_t channels, Extent o, Activation a) {
    if (a != Activation::Identity) eltwise(name, channels * o.area());
  }

  void eltwise(const std::string& name, std::int64_t ops) {
    if (elementwise_) layers.push_back({name, "elementwise", 0, ops});
  }

  void conv_bn_act(const std::string& name, std::int64_t kernel, std::int64_t in, std::int64_t out, Extent o,
                   Activation a) {
    conv(name + ".conv", kernel, in, out, o, false);
    batchnorm(name + ".bn", out, o);
    activation(name + ".act", out, o, a);
  }

  void bottleneck(const std::string& p, std::int64_t in, std::int64_t out, Extent o) {
    const std::int64_t mid = out / 2;
    const Activation a = c_.activation;
    conv_bn_act(p + ".reduce", 1, in, mid, o, a);
    if (c_.block_kind == BlockKind::Standard) {
      conv_bn_act(p + ".spatial", 3, mid, mid, o, a);
    } else {
      layers.push_back({p + ".depthwise+pointwise", "dwsep", params_depthwise_separable(3, mid, mid),
                        flops_depthwise_separable(o.h, o.w, 3, mid, mid)});
      batchnorm(p + ".depthwise.bn", mid, o);
      activation(p + ".depthwise.act", mid, o, a);
      batchnorm(p + ".pointwise.bn", mid, o);
      activation(p + ".pointwise.act", mid, o, a);
    }
    conv_bn_act(p + ".expand", 1, mid, out, o, Activation::Identity);
    if (in != out) conv_bn_act(p + ".skip", 1, in, out, o, Activation::Identity);
    eltwise(p + ".residual_add", out * o.area());
    activation(p + ".act", out, o, a);
  }

  void chain(const std::string& p, std::int64_t channels, Extent o) {
    for (int i = 0; i < c_.blocks_per_level; ++i) bottleneck(p + "." + std::to_string(i), channels, channels, o);
  }

  void cbam(const std::string& p, std::int64_t channels, Extent o) {
    const std::int64_t hidden = channels / c_.reduction_ratio;
    // The shared MLP runs on both pooled descriptors.
    layers.push_back({p + ".mlp.fc1", "linear", channels * hidden + hidden, 2 * channels * hidden});
    layers.push_back({p + ".mlp.fc2", "linear", hidden * channels + channels, 2 * hidden * channels});
    conv(p + ".spatial", 7, 2, 1, o, true);
    eltwise(p + ".gates", 2 * channels * o.area());
  }

  void hourglass(const std::string& p, int depth, Extent o) {
    const std::int64_t ch = c_.channels;
    chain(p + ".skip", ch, o);
    chain(p + ".before", ch, o.half());
    if (depth > 1) {
      hourglass(p + ".inner", depth - 1, o.half());
    } else {
      chain(p + ".bottom", ch, o.half());
    }
    chain(p + ".after", ch, o.half());
    eltwise(p + ".merge_add", ch * o.area());
    if (c_.cbam_inside) cbam(p + ".cbam", ch, o);
  }

  void network(Extent input) {
    const Extent s2 = input.half();
    const Extent s4 = s2.half();
    const std::int64_t mid = c_.stem_mid_channels();
    const std::int64_t ch = c_.channels;
    const std::int64_t j = c_.num_keypoints;
    conv_bn_act("stem.conv", 7, c_.input_channels, c_.stem_channels, s2, c_.activation);
    bottleneck("stem.block1", c_.stem_channels, mid, s2);
    bottleneck("stem.block2", mid, mid, s4);
    bottleneck("stem.block3", mid, ch, s4);
    for (int i = 0; i < c_.stacks; ++i) {
      const std::string p = "stack" + std::to_string(i);
      hourglass(p + ".hg", c_.depth, s4);
      chain(p + ".post", ch, s4);
      if (c_.cbam_between_stacks) cbam(p + ".cbam", ch, s4);
      conv_bn_act(p + ".features", 1, ch, ch, s4, c_.activation);
      conv(p + ".score", 1, ch, j, s4, true);
      if (i + 1 < c_.stacks) {
        conv(p + ".remap_features", 1, ch, ch, s4, true);
        conv(p + ".remap_heatmaps", 1, j, ch, s4, true);
        eltwise(p + ".fusion_add", 2 * ch * s4.area());
      }
    }
  }

 private:
  const NetworkConfig& c_;
  bool elementwise_;
};

}  // namespace

CostReport count_network(const NetworkConfig& config, const CountOptions& options) {
  NetworkConfig c = config;
  if (options.input_h) c.input_h = *options.input_h;
  if (options.input_w) c.input_w = *options.input_w;
  c.validate();

  Walker walker(c, options.include_elementwise);
  walker.network({c.input_h, c.input_w});

  CostReport r;
  r.input_h = c.input_h;
  r.input_w = c.input_w;
  r.layers = std::move(walker.layers);
  for (const LayerCost& l : r.layers) {
    r.totals.params += l.params;
    r.totals.flops += l.flops;
    if (l.kind == "conv" || l.kind == "dwsep") {
      r.totals.conv_weight_params += l.params;
    } else {
      r.totals.other_params += l.params;
    }
  }
  return r;
}

double reduction_pct(double ours, double baseline) {
  if (!(baseline > 0)) throw std::invalid_argument("reduction_pct: baseline total must be positive");
  return std::round(10000.0 * (1.0 - ours / baseline)) / 100.0;
}

Reduction compare(double ours_params, double baseline_params, double ours_flops, double baseline_flops) {
  return {reduction_pct(ours_params, baseline_params), reduction_pct(ours_flops, baseline_flops)};
}

Reduction compare(const CostTotals& ours, const CostTotals& baseline) {
  return compare(static_cast<double>(ours.params), static_cast<double>(baseline.params),
                 static_cast<double>(ours.flops), static_cast<double>(baseline.flops));
}

std::string format_pct(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", pct);
  return buf;
}

namespace {

std::string human(std::int64_t v, double unit, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%s", static_cast<double>(v) / unit, suffix);
  return buf;
}

}  // namespace

std::string format_table(const CostReport& r) {
  std::ostringstream os;
  os << "cost report";
  if (!r.label.empty()) os << " [" << r.label << "]";
  os << " at " << r.input_h << "x" << r.input_w << " (FLOPs = multiply-accumulates)\n";
  os << std::left << std::setw(56) << "layer" << std::setw(12) << "kind" << std::right << std::setw(12) << "params"
     << std::setw(16) << "flops" << "\n";
  for (const LayerCost& l : r.layers) {
    os << std::left << std::setw(56) << l.name << std::setw(12) << l.kind << std::right << std::setw(12) << l.params
       << std::setw(16) << l.flops << "\n";
  }
  os << "total params " << r.totals.params << " (" << human(r.totals.params, 1e6, "M") << "), conv weights "
     << r.totals.conv_weight_params << ", other " << r.totals.other_params << "\n";
  os << "total flops  " << r.totals.flops << " (" << human(r.totals.flops, 1e9, "G") << ")\n";
  return os.str();
}

std::string format_records(const CostReport& r) {
  std::ostringstream os;
  os << "# lap cost report v1\n";
  os << "input " << r.input_h << " " << r.input_w << "\n";
  for (const LayerCost& l : r.layers) {
    os << "layer " << l.name << " " << l.kind << " " << l.params << " " << l.flops << "\n";
  }
  os << "total params " << r.totals.params << "\n";
  os << "total flops " << r.totals.flops << "\n";
  os << "total conv_weight_params " << r.totals.conv_weight_params << "\n";
  os << "total other_params " << r.totals.other_params << "\n";
  return os.str();
}

std::string format_comparison(const CostReport& ours, const CostReport& baseline) {
  const Reduction red = compare(ours.totals, baseline.totals);
  std::ostringstream os;
  os << "comparison ours=" << (ours.label.empty() ? "config" : ours.label)
     << " baseline=" << (baseline.label.empty() ? "baseline" : baseline.label) << "\n";
  os << "baseline params " << baseline.totals.params << "\n";
  os << "baseline flops " << baseline.totals.flops << "\n";
  os << "reduction params " << format_pct(red.params_pct) << "\n";
  os << "reduction flops " << format_pct(red.flops_pct) << "\n";
  return os.str();
}

std::string format_published_check() {
  // LAP[x2]: 2.30M params, 3.7G FLOPs; Hourglass[x2]: 6.70M params, 9.08G FLOPs.
  const Reduction red = compare(2.30e6, 6.70e6, 3.7e9, 9.08e9);
  std::ostringstream os;
  os << "published LAP[x2] 2.30M/3.7G vs Hourglass[x2] 6.70M/9.08G\n";
  os << "published reduction params " << format_pct(red.params_pct) << "\n";
  os << "published reduction flops " << format_pct(red.flops_pct) << "\n";
  return os.str();
}

}  // namespace lap::cost
