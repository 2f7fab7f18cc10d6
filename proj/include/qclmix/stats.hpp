#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "qclmix/common.hpp"

namespace qclmix {

// ---------------------------------------------------------------------------
// Special functions (series / continued-fraction evaluations, ~1e-14 accuracy)

namespace special {

inline constexpr int kMaxIter = 500;
inline constexpr double kEps = 1e-16;
inline constexpr double kTiny = 1e-300;

// Regularized lower incomplete gamma P(a, x) by series expansion (x < a + 1).
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < kMaxIter; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a, x) by Lentz continued fraction.
inline double gamma_q_cf(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// Q(a, x) = 1 - P(a, x), the upper regularized incomplete gamma.
inline double gamma_q(double a, double x) {
  detail::require(a > 0.0 && x >= 0.0, "gamma_q: require a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

// Continued fraction for the regularized incomplete beta function.
inline double betacf(double a, double b, double x) {
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

// Regularized incomplete beta I_x(a, b).
inline double beta_i(double a, double b, double x) {
  detail::require(x >= 0.0 && x <= 1.0, "beta_i: x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace special

// Upper-tail probability of the chi-square distribution.
inline double chi2_sf(double x, double df) {
  detail::require(x >= 0.0, "chi2_sf: x must be non-negative");
  detail::require(df >= 1.0, "chi2_sf: df must be >= 1");
  return special::gamma_q(df / 2.0, x / 2.0);
}

// Upper-tail probability of the F distribution.
inline double f_sf(double x, double df1, double df2) {
  detail::require(df1 > 0.0 && df2 > 0.0, "f_sf: dfs must be positive");
  if (x <= 0.0) return 1.0;
  return special::beta_i(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * x));
}

// Critical value x with P(F > x) = alpha, found by bisection.
inline double f_critical(double alpha, double df1, double df2) {
  detail::require(alpha > 0.0 && alpha < 1.0, "f_critical: alpha in (0, 1)");
  double lo = 0.0, hi = 1.0;
  while (f_sf(hi, df1, df2) > alpha) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f_sf(mid, df1, df2) > alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Rank machinery

// ranks: row-major N x k; tie_term accumulates sum of t(t^2 - 1) over tie
// groups across all rows.
struct RankMatrix {
  std::size_t n_rows = 0;
  std::size_t k = 0;
  std::vector<double> ranks;
  double tie_term = 0.0;

  double at(std::size_t i, std::size_t j) const { return ranks[i * k + j]; }
};

// Rank the k scores within each row. Rank 1 goes to the best score (largest
// when higher_is_better); exact-equal scores share the mean of their
// positional ranks.
inline RankMatrix rank_models(const std::vector<std::vector<double>>& scores,
                              bool higher_is_better = true) {
  detail::require(!scores.empty(), "rank_models: empty score matrix");
  const std::size_t k = scores.front().size();
  detail::require(k >= 1, "rank_models: need at least one model");
  RankMatrix rm;
  rm.n_rows = scores.size();
  rm.k = k;
  rm.ranks.assign(rm.n_rows * k, 0.0);

  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& row = scores[i];
    detail::require(row.size() == k, "rank_models: ragged score matrix");
    for (double v : row)
      detail::require(std::isfinite(v), "rank_models: non-finite score");
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return higher_is_better ? row[a] > row[b]
                                               : row[a] < row[b];
                     });
    std::size_t pos = 0;
    while (pos < k) {
      std::size_t end = pos;
      while (end + 1 < k && row[order[end + 1]] == row[order[pos]]) ++end;
      const double t = static_cast<double>(end - pos + 1);
      const double avg_rank = (static_cast<double>(pos + 1) +
                               static_cast<double>(end + 1)) /
                              2.0;
      for (std::size_t q = pos; q <= end; ++q)
        rm.ranks[i * k + order[q]] = avg_rank;
      if (t > 1.0) rm.tie_term += t * (t * t - 1.0);
      pos = end + 1;
    }
  }
  return rm;
}

struct FriedmanResult {
  double chi2 = 0.0;
  double chi2_corrected = 0.0;
  double c = 1.0;  // tie correction factor, 1 when no ties
  double F_F = 0.0;
  bool F_F_infinite = false;
  int df1 = 0;
  int df2 = 0;
  std::vector<double> mean_ranks;
  double p_chi2 = 1.0;            // from the uncorrected statistic
  double p_chi2_corrected = 1.0;  // from the tie-corrected statistic
};

// Friedman statistic over an N x k rank matrix, with the tie-corrected
// variant and the Iman-Davenport F transform.
inline FriedmanResult friedman_test(const RankMatrix& rm) {
  const double N = static_cast<double>(rm.n_rows);
  const double k = static_cast<double>(rm.k);
  detail::require(rm.n_rows >= 2 && rm.k >= 2,
                  "friedman_test: need N >= 2 rows and k >= 2 models");

  FriedmanResult r;
  r.mean_ranks.assign(rm.k, 0.0);
  for (std::size_t i = 0; i < rm.n_rows; ++i)
    for (std::size_t j = 0; j < rm.k; ++j) r.mean_ranks[j] += rm.at(i, j);
  for (double& v : r.mean_ranks) v /= N;

  double sumsq = 0.0;
  for (double v : r.mean_ranks) sumsq += v * v;
  r.chi2 = 12.0 * N / (k * (k + 1.0)) * sumsq - 3.0 * N * (k + 1.0);

  r.c = 1.0 - rm.tie_term / (N * k * (k * k - 1.0));
  // c reaches 0 only when every row is fully tied, which forces chi2 = 0.
  r.chi2_corrected = r.c > 0.0 ? r.chi2 / r.c : 0.0;

  r.df1 = static_cast<int>(k) - 1;
  r.df2 = (static_cast<int>(k) - 1) * (static_cast<int>(rm.n_rows) - 1);

  const double denom = N * (k - 1.0) - r.chi2;
  if (denom <= 0.0) {
    r.F_F_infinite = true;
    r.F_F = std::numeric_limits<double>::infinity();
  } else {
    r.F_F = (N - 1.0) * r.chi2 / denom;
  }

  r.p_chi2 = chi2_sf(std::max(0.0, r.chi2), k - 1.0);
  r.p_chi2_corrected = chi2_sf(std::max(0.0, r.chi2_corrected), k - 1.0);
  return r;
}

// Global comparison over per-metric mean ranks: each row of `metric_ranks`
// holds one metric's average rank per model, and the rows are consumed
// directly as repeated measures (no re-ranking), so the statistic reproduces
// the arithmetic of averaging ranks across metrics. Set rerank = true for the
// textbook variant that re-ranks each row first.
inline FriedmanResult friedman_on_mean_ranks(
    const std::vector<std::vector<double>>& metric_ranks, bool rerank = false) {
  detail::require(!metric_ranks.empty(), "friedman_on_mean_ranks: empty input");
  if (rerank) {
    // Lower mean rank = better model.
    return friedman_test(rank_models(metric_ranks, /*higher_is_better=*/false));
  }
  RankMatrix rm;
  rm.n_rows = metric_ranks.size();
  rm.k = metric_ranks.front().size();
  rm.tie_term = 0.0;
  rm.ranks.reserve(rm.n_rows * rm.k);
  for (const auto& row : metric_ranks) {
    detail::require(row.size() == rm.k,
                    "friedman_on_mean_ranks: ragged rank matrix");
    rm.ranks.insert(rm.ranks.end(), row.begin(), row.end());
  }
  return friedman_test(rm);
}

}  // namespace qclmix
