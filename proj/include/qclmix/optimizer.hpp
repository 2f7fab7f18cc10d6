#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "qclmix/model.hpp"
#include "qclmix/tensor.hpp"

namespace qclmix {

// AdamW with decoupled decay: p <- p - lr*wd*p first, then the bias-corrected
// Adam update. Parameters flagged weight_decay=false skip the decay term.
class AdamW {
 public:
  struct Hyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit AdamW(std::vector<ParamRef> params) : AdamW(std::move(params), Hyper{}) {}

  AdamW(std::vector<ParamRef> params, Hyper hyper)
      : params_(std::move(params)), hyper_(hyper) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].tensor->numel(), 0.0);
      v_[i].assign(params_[i].tensor->numel(), 0.0);
    }
  }

  long long step_count() const { return t_; }

  void zero_grad() {
    for (auto& ref : params_) ref.tensor->zero_grad();
  }

  void step(double lr, double weight_decay) {
    ++t_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& ref = params_[i];
      auto& value = ref.tensor->data();
      const auto& grad = ref.tensor->grad();
      for (std::size_t j = 0; j < value.size(); ++j) {
        const double g = grad[j];
        if (!std::isfinite(g))
          throw numeric_error("AdamW: non-finite gradient in parameter '" +
                              ref.name + "'");
        if (ref.weight_decay && weight_decay != 0.0)
          value[j] -= lr * weight_decay * value[j];
        m_[i][j] = hyper_.beta1 * m_[i][j] + (1.0 - hyper_.beta1) * g;
        v_[i][j] = hyper_.beta2 * v_[i][j] + (1.0 - hyper_.beta2) * g * g;
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        value[j] -= lr * mhat / (std::sqrt(vhat) + hyper_.eps);
      }
    }
  }

 private:
  std::vector<ParamRef> params_;
  Hyper hyper_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long long t_ = 0;
};

struct OneCycleConfig {
  double max_lr = 1e-2;
  double warmup_fraction = 0.3;
  double div_factor = 25.0;     // start = max_lr / div_factor
  double final_div = 1e4;       // end = max_lr / final_div
};

// Cosine warm-up to max_lr over the first 30% of steps, then cosine anneal
// down to max_lr / final_div. The peak lands exactly on the boundary step.
inline double one_cycle_lr(long long step, long long total_steps,
                           const OneCycleConfig& cfg = {}) {
  detail::require(total_steps >= 1, "one_cycle_lr: total_steps must be >= 1");
  detail::require(step >= 0 && step < total_steps,
                  "one_cycle_lr: step out of range");
  if (total_steps == 1) return cfg.max_lr;

  const double start_lr = cfg.max_lr / cfg.div_factor;
  const double final_lr = cfg.max_lr / cfg.final_div;
  const long long peak = static_cast<long long>(
      std::llround(cfg.warmup_fraction * static_cast<double>(total_steps - 1)));

  auto cosine = [](double from, double to, double t) {
    return to + (from - to) * 0.5 *
                    (1.0 + std::cos(std::numbers::pi * t));
  };

  if (step <= peak) {
    if (peak == 0) return cfg.max_lr;
    const double t = static_cast<double>(step) / static_cast<double>(peak);
    return cosine(start_lr, cfg.max_lr, t);
  }
  const double t = static_cast<double>(step - peak) /
                   static_cast<double>(total_steps - 1 - peak);
  return cosine(cfg.max_lr, final_lr, t);
}

}  // namespace qclmix
