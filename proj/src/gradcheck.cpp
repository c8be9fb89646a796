#include "lap/gradcheck.hpp"

#include "lap/cbam.hpp"
#include "lap/heatmap.hpp"
#include "lap/network.hpp"
#include "lap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>

namespace lap {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
}

namespace {

using Rng = std::mt19937_64;

Tensord randn(const Shape& s, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensord t(s);
  for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = d(rng);
  return t;
}

double dot(const Tensord& a, const Tensord& b) { return (a.array() * b.array()).sum(); }

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Biases, betas and gammas start at constants; spread them so their gradients are exercised.
void jitter_affine(const ParamList& params, Rng& rng) {
  std::normal_distribution<double> small(0.0, 0.1);
  std::uniform_real_distribution<double> gamma(0.5, 1.5);
  for (const ParamRef& p : params) {
    if (!p.trainable()) continue;
    if (ends_with(p.name, "bias") || ends_with(p.name, "beta")) {
      for (std::int64_t i = 0; i < p.value->size(); ++i) p.value->data()[i] = small(rng);
    } else if (ends_with(p.name, "gamma")) {
      for (std::int64_t i = 0; i < p.value->size(); ++i) p.value->data()[i] = gamma(rng);
    }
  }
}

/// Differentiable scalar objective: `objective(x)` evaluates it and
/// `gradient(x)` returns d/dx after filling the parameter gradients.
struct Probe {
  std::function<double(const Tensord&)> objective;
  std::function<Tensord(const Tensord&)> gradient;
  ParamList params;                 // trainable entries only
  std::int64_t global_budget = 0;  // > 0: sample this many parameter coordinates in total
};

/// Random-projection objective sum(r * f(x)) around a module.
Probe module_probe(Module& m, Mode mode, const Tensord& x, Rng& rng, const std::string& prefix = "") {
  auto r = std::make_shared<Tensord>(randn(m.forward(x, mode).shape(), rng));
  Probe p;
  p.objective = [&m, mode, r](const Tensord& in) { return dot(m.forward(in, mode), *r); };
  p.gradient = [&m, mode, r](const Tensord& in) {
    m.forward(in, mode);
    return m.backward(*r);
  };
  for (const ParamRef& ref : parameters(m, prefix)) {
    if (ref.trainable()) p.params.push_back(ref);
  }
  return p;
}

GradcheckResult run_probe(const std::string& group, const std::string& name, Probe& probe, Tensord x, Rng& rng,
                          const GradcheckOptions& o, double tolerance) {
  GradcheckResult res{group, name, 0.0, 0.0, tolerance, 0, 0.0, ""};
  double diff2 = 0, a2 = 0, n2 = 0;
  zero_grad(probe.params);
  const Tensord dx = probe.gradient(x);
  std::vector<Tensord> analytic;
  for (const ParamRef& p : probe.params) analytic.push_back(*p.grad);

  auto compare = [&](Tensord& target, std::int64_t i, double a, const std::string& what) {
    const double saved = target.data()[i];
    target.data()[i] = saved + o.step;
    const double plus = probe.objective(x);
    target.data()[i] = saved - o.step;
    const double minus = probe.objective(x);
    target.data()[i] = saved;
    const double numeric = (plus - minus) / (2 * o.step);
    diff2 += (a - numeric) * (a - numeric);
    a2 += a * a;
    n2 += numeric * numeric;
    res.scaled_error = std::max(res.scaled_error, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    const double err = relative_error(a, numeric);
    if (err >= res.worst_coordinate_error) {
      res.worst_coordinate_error = err;
      res.worst_at = what + "[" + std::to_string(i) + "]";
    }
    ++res.coordinates;
  };
  auto pick = [&](std::int64_t size, std::int64_t budget) {
    std::vector<std::int64_t> idx;
    if (size <= budget) {
      for (std::int64_t i = 0; i < size; ++i) idx.push_back(i);
    } else {
      std::uniform_int_distribution<std::int64_t> d(0, size - 1);
      for (std::int64_t k = 0; k < budget; ++k) idx.push_back(d(rng));
    }
    return idx;
  };

  for (std::int64_t i : pick(x.size(), o.max_coordinates)) compare(x, i, dx.data()[i], "input");
  if (probe.global_budget > 0) {
    std::uniform_int_distribution<std::size_t> which(0, probe.params.size() - 1);
    for (std::int64_t k = 0; k < probe.global_budget; ++k) {
      const std::size_t t = which(rng);
      std::uniform_int_distribution<std::int64_t> at(0, probe.params[t].value->size() - 1);
      const std::int64_t i = at(rng);
      compare(*probe.params[t].value, i, analytic[t].data()[i], probe.params[t].name);
    }
  } else {
    for (std::size_t t = 0; t < probe.params.size(); ++t) {
      for (std::int64_t i : pick(probe.params[t].value->size(), o.max_coordinates)) {
        compare(*probe.params[t].value, i, analytic[t].data()[i], probe.params[t].name);
      }
    }
  }
  const double scale = std::sqrt(std::max(a2, n2));
  res.rel_error = scale > 0 ? std::sqrt(diff2) / scale : 0.0;
  return res;
}

/// Parameterless op as a module.
class FnModule : public Module {
 public:
  using Fwd = std::function<Tensord(const Tensord&)>;
  using Bwd = std::function<Tensord(const Tensord& dy, const Tensord& x, const Tensord& y)>;
  FnModule(Fwd f, Bwd b) : f_(std::move(f)), b_(std::move(b)) {}
  Tensord forward(const Tensord& x, Mode) override {
    x_ = x;
    y_ = f_(x);
    return y_;
  }
  Tensord backward(const Tensord& dy) override { return b_(dy, x_, y_); }
  void collect(const std::string&, ParamList&) override {}

 private:
  Fwd f_;
  Bwd b_;
  Tensord x_, y_;
};

class LinearModule : public Module {
 public:
  LinearModule(std::int64_t in, std::int64_t out, Rng& rng) {
    p_.weight = randn(Shape{out, in, 1, 1}, rng, 0.5);
    p_.bias = randn(Shape{1, out, 1, 1}, rng, 0.1);
    gw_ = Tensord(p_.weight.shape());
    gb_ = Tensord(p_.bias.shape());
  }
  Tensord forward(const Tensord& x, Mode) override {
    x_ = x;
    return linear_forward(x, p_);
  }
  Tensord backward(const Tensord& dy) override {
    LinearGrads<double> g = linear_backward(dy, x_, p_);
    gw_.array() += g.weight.array();
    gb_.array() += g.bias.array();
    return g.input;
  }
  void collect(const std::string& prefix, ParamList& out) override {
    out.push_back({prefix + "weight", &p_.weight, &gw_});
    out.push_back({prefix + "bias", &p_.bias, &gb_});
  }

 private:
  LinearParams<double> p_;
  Tensord gw_, gb_, x_;
};

struct Case {
  std::string group;
  std::string name;
  std::function<GradcheckResult(Rng&, const GradcheckOptions&)> run;
};

template <typename M>
GradcheckResult check_module(const std::string& group, const std::string& name, M& m, Mode mode, const Shape& in,
                             Rng& rng, const GradcheckOptions& o) {
  jitter_affine(parameters(m), rng);
  const Tensord x = randn(in, rng);
  Probe p = module_probe(m, mode, x, rng);
  return run_probe(group, name, p, x, rng, o, o.tolerance);
}

std::vector<Case> all_cases() {
  std::vector<Case> cases;
  auto add_module = [&](std::string group, std::string name, auto make, Mode mode, Shape in) {
    cases.push_back({group, name, [=](Rng& rng, const GradcheckOptions& o) {
                       auto m = make(rng);
                       return check_module(group, name, *m, mode, in, rng, o);
                     }});
  };
  auto conv = [](std::int64_t in, std::int64_t out, int k, int stride, int pad, int groups, bool bias) {
    return [=](Rng& rng) {
      auto m = std::make_unique<Conv2d>(in, out, k, stride, pad, groups, bias);
      m->init(rng);
      return m;
    };
  };
  auto fn = [](FnModule::Fwd f, FnModule::Bwd b) {
    return [=](Rng&) { return std::make_unique<FnModule>(f, b); };
  };

  add_module("layers", "conv3x3", conv(3, 4, 3, 1, 1, 1, true), Mode::Train, {2, 3, 6, 5});
  add_module("layers", "conv3x3_stride2", conv(3, 4, 3, 2, 1, 1, false), Mode::Train, {2, 3, 7, 6});
  add_module("layers", "conv7x7_stride2", conv(1, 4, 7, 2, 3, 1, true), Mode::Train, {1, 1, 10, 10});
  add_module("layers", "conv1x1", conv(5, 3, 1, 1, 0, 1, true), Mode::Train, {2, 5, 4, 4});
  add_module("layers", "conv3x3_depthwise", conv(4, 4, 3, 1, 1, 4, false), Mode::Train, {2, 4, 5, 5});
  add_module("layers", "conv3x3_grouped", conv(4, 6, 3, 1, 1, 2, true), Mode::Train, {1, 4, 5, 5});
  add_module("layers", "batchnorm_train", [](Rng&) { return std::make_unique<BatchNorm2d>(3); }, Mode::Train,
             {3, 3, 4, 4});
  add_module("layers", "batchnorm_eval",
             [](Rng& rng) {
               auto m = std::make_unique<BatchNorm2d>(3);
               std::uniform_real_distribution<double> u(0.5, 2.0);
               m->params().running_mean = randn(m->params().running_mean.shape(), rng);
               for (std::int64_t i = 0; i < 3; ++i) m->params().running_var.data()[i] = u(rng);
               return m;
             },
             Mode::Eval, {2, 3, 4, 4});
  add_module("layers", "relu",
             fn([](const Tensord& x) { return relu(x); },
                [](const Tensord& dy, const Tensord& x, const Tensord&) { return relu_backward(dy, x); }),
             Mode::Train, {2, 3, 5, 5});
  add_module("layers", "elu",
             fn([](const Tensord& x) { return elu(x); },
                [](const Tensord& dy, const Tensord& x, const Tensord&) { return elu_backward(dy, x); }),
             Mode::Train, {2, 3, 5, 5});
  add_module("layers", "elu_alpha0.5",
             fn([](const Tensord& x) { return elu(x, 0.5); },
                [](const Tensord& dy, const Tensord& x, const Tensord&) { return elu_backward(dy, x, 0.5); }),
             Mode::Train, {2, 3, 5, 5});
  add_module("layers", "sigmoid",
             fn([](const Tensord& x) { return sigmoid(x); },
                [](const Tensord& dy, const Tensord&, const Tensord& y) { return sigmoid_backward(dy, y); }),
             Mode::Train, {2, 3, 5, 5});
  {
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    add_module("layers", "maxpool2x2",
               fn(
                   [argmax](const Tensord& x) {
                     PoolResult<double> r = maxpool2d(x);
                     *argmax = r.argmax;
                     return r.output;
                   },
                   [argmax](const Tensord& dy, const Tensord& x, const Tensord&) {
                     return maxpool2d_backward(dy, *argmax, x.shape());
                   }),
               Mode::Train, {2, 3, 6, 4});
  }
  add_module("layers", "upsample_nearest2x",
             fn([](const Tensord& x) { return upsample_nearest(x); },
                [](const Tensord& dy, const Tensord&, const Tensord&) { return upsample_nearest_backward(dy); }),
             Mode::Train, {2, 3, 3, 4});
  add_module("layers", "linear", [](Rng& rng) { return std::make_unique<LinearModule>(6, 3, rng); }, Mode::Train,
             {4, 6, 1, 1});
  add_module("layers", "conv_bn_elu",
             [](Rng& rng) {
               auto m = std::make_unique<ConvBnAct>(3, 4, 3, 1, 1, true, Activation::Elu);
               m->init(rng);
               return m;
             },
             Mode::Train, {2, 3, 5, 5});
  add_module("layers", "depthwise_bn_relu",
             [](Rng& rng) {
               auto m = std::make_unique<ConvBnAct>(4, 4, 3, 1, 4, true, Activation::Relu);
               m->init(rng);
               return m;
             },
             Mode::Train, {2, 4, 5, 5});

  auto cbam = [](std::int64_t c, std::int64_t r, Activation hidden, bool bias) {
    return [=](Rng& rng) {
      auto m = std::make_unique<Cbam>(c, r, hidden, bias);
      m->init(rng);
      return m;
    };
  };
  add_module("cbam", "cbam", cbam(8, 4, Activation::Relu, true), Mode::Train, {2, 8, 6, 5});
  add_module("cbam", "cbam_elu_hidden", cbam(8, 2, Activation::Elu, true), Mode::Train, {2, 8, 4, 4});
  add_module("cbam", "cbam_no_spatial_bias", cbam(4, 4, Activation::Relu, false), Mode::Train, {1, 4, 7, 7});

  auto block = [](BlockKind kind, std::int64_t in, std::int64_t out, Activation act) {
    return [=](Rng& rng) {
      auto m = std::make_unique<Bottleneck>(BottleneckSpec::make(kind, in, out, act));
      m->init(rng);
      return m;
    };
  };
  add_module("blocks", "bottleneck_standard_identity", block(BlockKind::Standard, 8, 8, Activation::Relu),
             Mode::Train, {2, 8, 4, 4});
  add_module("blocks", "bottleneck_standard_projection", block(BlockKind::Standard, 4, 8, Activation::Elu),
             Mode::Train, {2, 4, 4, 4});
  add_module("blocks", "bottleneck_lightweight_identity", block(BlockKind::Lightweight, 8, 8, Activation::Elu),
             Mode::Train, {2, 8, 4, 4});
  add_module("blocks", "bottleneck_lightweight_projection", block(BlockKind::Lightweight, 6, 8, Activation::Relu),
             Mode::Train, {2, 6, 5, 5});

  auto hourglass = [](BlockKind kind, Activation act, bool attention) {
    return [=](Rng& rng) {
      auto m = std::make_unique<Hourglass>(HourglassSpec{1, 8, 1, attention}, kind, act, 4, Activation::Relu);
      m->init(rng);
      return m;
    };
  };
  add_module("hourglass", "hourglass_depth1_lightweight_cbam",
             hourglass(BlockKind::Lightweight, Activation::Elu, true), Mode::Train, {2, 8, 4, 4});
  add_module("hourglass", "hourglass_depth1_standard", hourglass(BlockKind::Standard, Activation::Relu, false),
             Mode::Train, {2, 8, 4, 4});

  auto mse_case = [&](std::string name, bool masked) {
    cases.push_back({"loss", name, [=](Rng& rng, const GradcheckOptions& o) {
                       const Shape s{2, 3, 5, 4};
                       const Tensord gt = randn(s, rng);
                       std::vector<std::uint8_t> mask;
                       if (masked) mask = {1, 0, 1, 1, 1, 0};
                       Probe p;
                       p.objective = [=](const Tensord& x) { return mse_loss(x, gt, mask).loss; };
                       p.gradient = [=](const Tensord& x) { return mse_loss(x, gt, mask).grad; };
                       return run_probe("loss", name, p, randn(s, rng), rng, o, o.tolerance);
                     }});
  };
  mse_case("mse_loss", false);
  mse_case("mse_loss_masked", true);

  cases.push_back({"network", "toy_network_end_to_end", [](Rng& rng, const GradcheckOptions& o) {
                     NetworkConfig cfg = build_lap_config("toy");
                     cfg.input_h = 32;
                     cfg.input_w = 32;
                     auto net = std::make_shared<LapNet>(cfg, rng());
                     ParamList all = net->parameters();
                     jitter_affine(all, rng);
                     const Tensord x = randn(Shape{2, cfg.input_channels, cfg.input_h, cfg.input_w}, rng);
                     auto rs = std::make_shared<std::vector<Tensord>>();
                     for (const Tensord& out : net->forward(x, Mode::Train)) rs->push_back(randn(out.shape(), rng));
                     Probe p;
                     p.objective = [net, rs](const Tensord& in) {
                       const auto outs = net->forward(in, Mode::Train);
                       double s = 0;
                       for (std::size_t i = 0; i < outs.size(); ++i) s += dot(outs[i], (*rs)[i]);
                       return s;
                     };
                     p.gradient = [net, rs](const Tensord& in) {
                       net->forward(in, Mode::Train);
                       return net->backward(*rs);
                     };
                     for (const ParamRef& ref : all) {
                       if (ref.trainable()) p.params.push_back(ref);
                     }
                     p.global_budget = 160;
                     return run_probe("network", "toy_network_end_to_end", p, x, rng, o, o.network_tolerance);
                   }});
  return cases;
}

bool matches(const Case& c, const std::string& filter) {
  return filter.empty() || c.group == filter || c.name.rfind(filter, 0) == 0;
}

}  // namespace

std::vector<std::string> gradcheck_groups() { return {"layers", "cbam", "blocks", "hourglass", "loss", "network"}; }

std::vector<GradcheckResult> run_gradchecks(const std::string& filter, std::uint64_t seed,
                                            const GradcheckOptions& options) {
  std::vector<GradcheckResult> out;
  const auto cases = all_cases();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!matches(cases[i], filter)) continue;
    // Keyed by case position so filtering does not change any case's draws.
    Rng rng = keyed_rng(seed, Stream::Gradcheck, i);
    out.push_back(cases[i].run(rng, options));
  }
  if (out.empty()) throw std::invalid_argument("gradcheck: no check matches '" + filter + "'");
  return out;
}

std::string format_gradcheck_table(const std::vector<GradcheckResult>& results) {
  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %-36s %10s %10s %9s %6s %6s  %s\n", "group", "check", "rel_err", "scaled_err", "tolerance",
                "coords", "status", "worst coordinate");
  s += buf;
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-10s %-36s %10.3e %10.3e %9.1e %6lld %6s  %.2e at %s\n", r.group.c_str(),
                  r.name.c_str(), r.rel_error, r.scaled_error, r.tolerance, static_cast<long long>(r.coordinates), r.passed() ? "PASS" : "FAIL",
                  r.worst_coordinate_error, r.worst_at.c_str());
    s += buf;
  }
  return s;
}

}  // namespace lap
