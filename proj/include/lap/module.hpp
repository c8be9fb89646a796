#pragma once

#include "lap/layers.hpp"
#include "lap/tensor.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace lap {

/// A named tensor owned by some module. `grad` is null for non-trainable
/// buffers such as batch-norm running statistics.
struct ParamRef {
  std::string name;
  Tensord* value = nullptr;
  Tensord* grad = nullptr;

  bool trainable() const { return grad != nullptr; }
};

using ParamList = std::vector<ParamRef>;

/// Stateful layer: forward caches what backward needs, backward accumulates
/// parameter gradients and returns the input gradient.
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  virtual Tensord forward(const Tensord& x, Mode mode) = 0;
  virtual Tensord backward(const Tensord& dy) = 0;
  virtual void collect(const std::string& prefix, ParamList& out) = 0;
};

ParamList parameters(Module& m, const std::string& prefix = "");
std::int64_t count_trainable(const ParamList& params);
void zero_grad(const ParamList& params);

class Conv2d : public Module {
 public:
  Conv2d(std::int64_t in, std::int64_t out, int kernel, int stride, int padding, int groups, bool bias);

  Tensord forward(const Tensord& x, Mode mode) override;
  Tensord backward(const Tensord& dy) override;
  void collect(const std::string& prefix, ParamList& out) override;

  void init(std::mt19937_64& rng);
  ConvParams<double>& params() { return params_; }
  const ConvParams<double>& params() const { return params_; }

 private:
  ConvParams<double> params_;
  Tensord kernel_grad_;
  Tensord bias_grad_;
  Tensord input_;
};

class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(std::int64_t channels);

  Tensord forward(const Tensord& x, Mode mode) override;
  Tensord backward(const Tensord& dy) override;
  void collect(const std::string& prefix, ParamList& out) override;

  BatchNormParams<double>& params() { return params_; }

 private:
  BatchNormParams<double> params_;
  Tensord gamma_grad_;
  Tensord beta_grad_;
  BatchNormCache<double> cache_;
  bool cached_ = false;
};

/// conv -> optional batch norm -> activation.
class ConvBnAct : public Module {
 public:
  ConvBnAct(std::int64_t in, std::int64_t out, int kernel, int stride, int groups, bool norm, Activation act,
            bool bias = false);

  Tensord forward(const Tensord& x, Mode mode) override;
  Tensord backward(const Tensord& dy) override;
  void collect(const std::string& prefix, ParamList& out) override;

  void init(std::mt19937_64& rng) { conv_.init(rng); }
  Conv2d& conv() { return conv_; }
  BatchNorm2d* norm() { return norm_.get(); }
  Activation activation() const { return act_; }
  void set_elu_alpha(double alpha) { alpha_ = alpha; }

 private:
  Conv2d conv_;
  std::unique_ptr<BatchNorm2d> norm_;
  Activation act_;
  double alpha_ = 1.0;
  Tensord pre_activation_;
};

}  // namespace lap
