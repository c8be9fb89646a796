#include "lap/module.hpp"

namespace lap {

ParamList parameters(Module& m, const std::string& prefix) {
  ParamList out;
  m.collect(prefix, out);
  return out;
}

std::int64_t count_trainable(const ParamList& params) {
  std::int64_t total = 0;
  for (const auto& p : params) {
    if (p.trainable()) total += p.value->size();
  }
  return total;
}

void zero_grad(const ParamList& params) {
  for (const auto& p : params) {
    if (p.grad) p.grad->array().setZero();
  }
}

static std::string join(const std::string& prefix, const char* name) {
  return prefix.empty() ? std::string(name) : prefix + "." + name;
}

//------------------------------------------------------------------------------

Conv2d::Conv2d(std::int64_t in, std::int64_t out, int kernel, int stride, int padding, int groups, bool bias) {
  if (groups < 1 || in % groups != 0 || out % groups != 0) {
    throw ShapeError("Conv2d: channels " + std::to_string(in) + "->" + std::to_string(out) +
                     " not divisible by groups " + std::to_string(groups));
  }
  params_.kernel = Tensord(Shape{out, in / groups, kernel, kernel});
  if (bias) params_.bias = Tensord(Shape{1, out, 1, 1});
  params_.stride = stride;
  params_.padding = padding;
  params_.groups = groups;
  kernel_grad_ = Tensord(params_.kernel.shape());
  if (bias) bias_grad_ = Tensord(params_.bias.shape());
}

void Conv2d::init(std::mt19937_64& rng) {
  const Shape& k = params_.kernel.shape();
  he_normal(params_.kernel, k.c * k.h * k.w, rng);
  if (params_.has_bias()) params_.bias.array().setZero();
}

Tensord Conv2d::forward(const Tensord& x, Mode) {
  input_ = x;
  return conv2d_forward(x, params_);
}

Tensord Conv2d::backward(const Tensord& dy) {
  if (input_.empty()) throw std::logic_error("Conv2d::backward without a cached forward");
  ConvGrads<double> g = conv2d_backward(dy, input_, params_);
  kernel_grad_.array() += g.kernel.array();
  if (params_.has_bias()) bias_grad_.array() += g.bias.array();
  return std::move(g.input);
}

void Conv2d::collect(const std::string& prefix, ParamList& out) {
  out.push_back({join(prefix, "weight"), &params_.kernel, &kernel_grad_});
  if (params_.has_bias()) out.push_back({join(prefix, "bias"), &params_.bias, &bias_grad_});
}

//------------------------------------------------------------------------------

BatchNorm2d::BatchNorm2d(std::int64_t channels)
    : params_(BatchNormParams<double>::identity(channels)),
      gamma_grad_(params_.gamma.shape()),
      beta_grad_(params_.beta.shape()) {}

Tensord BatchNorm2d::forward(const Tensord& x, Mode mode) {
  cached_ = true;
  return batchnorm_forward(x, params_, mode, &cache_);
}

Tensord BatchNorm2d::backward(const Tensord& dy) {
  if (!cached_) throw std::logic_error("BatchNorm2d::backward without a cached forward");
  BatchNormGrads<double> g = batchnorm_backward(dy, params_, cache_);
  gamma_grad_.array() += g.gamma.array();
  beta_grad_.array() += g.beta.array();
  return std::move(g.input);
}

void BatchNorm2d::collect(const std::string& prefix, ParamList& out) {
  out.push_back({join(prefix, "gamma"), &params_.gamma, &gamma_grad_});
  out.push_back({join(prefix, "beta"), &params_.beta, &beta_grad_});
  out.push_back({join(prefix, "running_mean"), &params_.running_mean, nullptr});
  out.push_back({join(prefix, "running_var"), &params_.running_var, nullptr});
}

//------------------------------------------------------------------------------

ConvBnAct::ConvBnAct(std::int64_t in, std::int64_t out, int kernel, int stride, int groups, bool norm,
                     Activation act, bool bias)
    : conv_(in, out, kernel, stride, (kernel - 1) / 2, groups, bias),
      norm_(norm ? std::make_unique<BatchNorm2d>(out) : nullptr),
      act_(act) {}

Tensord ConvBnAct::forward(const Tensord& x, Mode mode) {
  Tensord t = conv_.forward(x, mode);
  if (norm_) t = norm_->forward(t, mode);
  Tensord y = activate(t, act_, alpha_);
  pre_activation_ = std::move(t);
  return y;
}

Tensord ConvBnAct::backward(const Tensord& dy) {
  Tensord d = activate_backward(dy, pre_activation_, act_, alpha_);
  if (norm_) d = norm_->backward(d);
  return conv_.backward(d);
}

void ConvBnAct::collect(const std::string& prefix, ParamList& out) {
  conv_.collect(join(prefix, "conv"), out);
  if (norm_) norm_->collect(join(prefix, "bn"), out);
}

}  // namespace lap
