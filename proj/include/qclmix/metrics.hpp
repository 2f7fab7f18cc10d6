#pragma once

#include <cstdint>
#include <vector>

#include "qclmix/common.hpp"

namespace qclmix {

// C x C confusion counts indexed (true label, predicted label).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes)
      : C_(num_classes),
        counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
    detail::require(num_classes >= 1, "ConfusionMatrix: need >= 1 class");
  }

  int num_classes() const { return C_; }
  std::int64_t at(int t, int p) const {
    return counts_[static_cast<std::size_t>(t) * C_ + p];
  }
  std::int64_t& at(int t, int p) {
    return counts_[static_cast<std::size_t>(t) * C_ + p];
  }
  std::int64_t total() const {
    std::int64_t n = 0;
    for (auto v : counts_) n += v;
    return n;
  }

 private:
  int C_;
  std::vector<std::int64_t> counts_;
};

inline ConfusionMatrix confusion_matrix(const std::vector<int>& y_true,
                                        const std::vector<int>& y_pred,
                                        int num_classes) {
  detail::require(y_true.size() == y_pred.size(),
                  "confusion_matrix: label vectors must have equal length");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    detail::require(y_true[i] >= 0 && y_true[i] < num_classes &&
                        y_pred[i] >= 0 && y_pred[i] < num_classes,
                    "confusion_matrix: label out of range");
    ++cm.at(y_true[i], y_pred[i]);
  }
  return cm;
}

struct Metrics {
  double accuracy = 0.0;
  double maP = 0.0;   // unweighted mean of per-class precision
  double maR = 0.0;   // unweighted mean of per-class recall
  double maF1 = 0.0;  // harmonic mean of maP and maR
  bool zero_division = false;  // some class had an empty precision/recall denominator
};

// Macro metrics with 0/0 per-class terms mapped to 0 (flagged). maF1 here is
// the harmonic mean of the two macro averages, not the mean of per-class F1.
inline Metrics macro_metrics(const ConfusionMatrix& cm) {
  const int C = cm.num_classes();
  const double total = static_cast<double>(cm.total());
  detail::require(total > 0.0, "macro_metrics: empty confusion matrix");

  Metrics m;
  double diag = 0.0;
  for (int c = 0; c < C; ++c) diag += static_cast<double>(cm.at(c, c));
  m.accuracy = diag / total;

  double psum = 0.0, rsum = 0.0;
  for (int c = 0; c < C; ++c) {
    double tp = static_cast<double>(cm.at(c, c));
    double pred_c = 0.0, true_c = 0.0;
    for (int o = 0; o < C; ++o) {
      pred_c += static_cast<double>(cm.at(o, c));
      true_c += static_cast<double>(cm.at(c, o));
    }
    if (pred_c > 0.0) {
      psum += tp / pred_c;
    } else {
      m.zero_division = true;
    }
    if (true_c > 0.0) {
      rsum += tp / true_c;
    } else {
      m.zero_division = true;
    }
  }
  m.maP = psum / C;
  m.maR = rsum / C;
  m.maF1 = (m.maP + m.maR) > 0.0 ? 2.0 * m.maP * m.maR / (m.maP + m.maR) : 0.0;
  return m;
}

}  // namespace qclmix
