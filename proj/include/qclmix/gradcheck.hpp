#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "qclmix/tensor.hpp"

namespace qclmix {

// Central-difference gradient check for a scalar-valued tensor function.
//
// Returns the maximum over coordinates of
//   |analytic - (f(x+h) - f(x-h)) / 2h| / max(1, |analytic|).
// The function is evaluated on copies; x itself is left untouched.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& x, double h = 1e-5) {
  // Analytic pass on a fresh tape.
  Tensor probe = x.clone();
  probe.set_requires_grad();
  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f(probe);
    detail::require(loss.numel() == 1, "grad_check: f must be scalar-valued");
    tape.backward(loss);
    analytic = probe.grad();
  }

  auto eval_at = [&](const std::vector<double>& values) {
    Tensor p = x.clone();
    p.data() = values;
    Tensor out = f(p);  // no active tape: forward only
    return out.value_scalar();
  };

  double worst = 0.0;
  std::vector<double> point = x.data();
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double keep = point[i];
    point[i] = keep + h;
    const double fp = eval_at(point);
    point[i] = keep - h;
    const double fm = eval_at(point);
    point[i] = keep;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max(1.0, std::fabs(analytic[i]));
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace qclmix
