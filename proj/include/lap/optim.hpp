#pragma once

#include "lap/module.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace lap {

struct AdamConfig {
  double lr = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Tensord m;
  Tensord v;
};

/// One bias-corrected Adam update of `value` in place; `step` counts from 1.
void adam_update(Tensord& value, const Tensord& grad, AdamMoments& moments, std::int64_t step, double lr,
                 const AdamConfig& config);

/// Adam over every trainable entry of a parameter list, in list order.
class Adam {
 public:
  explicit Adam(const AdamConfig& config) : config_(config), lr_(config.lr) {}

  void step(const ParamList& params);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::int64_t steps() const { return step_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }

 private:
  AdamConfig config_;
  double lr_;
  std::int64_t step_ = 0;
  std::vector<AdamMoments> moments_;
};

struct PlateauConfig {
  double factor = 0.2;
  int patience = 5;
  double min_delta_rel = 1e-6;
};

/// Reduce-on-plateau over a monitored loss. A value counts as an improvement
/// when it is below best * (1 - min_delta_rel). When `patience` consecutive
/// epochs fail to improve, lr = lr0 * factor^k for the k-th reduction and the
/// counter restarts.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, const PlateauConfig& config);

  /// Feed one epoch's monitored loss; returns the learning rate to use next.
  double step(double loss);

  double lr() const { return lr_; }
  int reductions() const { return reductions_; }
  int bad_epochs() const { return bad_epochs_; }
  double best() const { return best_; }

 private:
  double initial_lr_;
  PlateauConfig config_;
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
  int reductions_ = 0;
};

}  // namespace lap
