#include "lap/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace lap {

void adam_update(Tensord& value, const Tensord& grad, AdamMoments& s, std::int64_t step, double lr,
                 const AdamConfig& c) {
  if (grad.shape() != value.shape()) throw shape_mismatch("adam_update", value.shape(), grad.shape());
  if (s.m.shape() != value.shape()) {
    s.m = Tensord(value.shape());
    s.v = Tensord(value.shape());
  }
  const double t = static_cast<double>(step);
  s.m.array() = c.beta1 * s.m.array() + (1.0 - c.beta1) * grad.array();
  s.v.array() = c.beta2 * s.v.array() + (1.0 - c.beta2) * grad.array().square();
  const double m_corr = 1.0 - std::pow(c.beta1, t);
  const double v_corr = 1.0 - std::pow(c.beta2, t);
  value.array() -= lr * (s.m.array() / m_corr) / ((s.v.array() / v_corr).sqrt() + c.eps);
}

void Adam::step(const ParamList& params) {
  ++step_;
  std::size_t k = 0;
  for (const ParamRef& p : params) {
    if (!p.trainable()) continue;
    if (k == moments_.size()) moments_.emplace_back();
    adam_update(*p.value, *p.grad, moments_[k], step_, lr_, config_);
    ++k;
  }
}

PlateauScheduler::PlateauScheduler(double initial_lr, const PlateauConfig& config)
    : initial_lr_(initial_lr), config_(config), lr_(initial_lr) {
  if (!(initial_lr >= 0)) throw std::invalid_argument("plateau scheduler: lr must be non-negative");
  if (!(config.factor > 0 && config.factor < 1)) throw std::invalid_argument("plateau scheduler: factor must be in (0, 1)");
  if (config.patience < 1) throw std::invalid_argument("plateau scheduler: patience must be >= 1");
}

double PlateauScheduler::step(double loss) {
  if (!std::isfinite(loss)) throw std::invalid_argument("plateau scheduler: monitored loss is not finite");
  if (loss < best_ * (1.0 - config_.min_delta_rel)) {
    best_ = loss;
    bad_epochs_ = 0;
    return lr_;
  }
  if (++bad_epochs_ >= config_.patience) {
    ++reductions_;
    lr_ = initial_lr_ * std::pow(config_.factor, reductions_);
    bad_epochs_ = 0;
  }
  return lr_;
}

}  // namespace lap
