#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qclmix/rng.hpp"
#include "qclmix/tensor.hpp"

namespace qclmix {

struct MixupConfig {
  double alpha_beta = 0.4;  // Beta(alpha, alpha) concentration
  int k_neighbors = 5;
  bool enabled = true;

  void validate() const {
    detail::require(alpha_beta > 0.0, "MixupConfig: alpha_beta must be > 0");
    detail::require(k_neighbors >= 1, "MixupConfig: k_neighbors must be >= 1");
  }
};

// For each row, the k nearest other rows by Euclidean distance, ascending;
// distance ties break toward the lower index.
inline std::vector<std::vector<int>> knn_neighbors(const Tensor& batch, int k) {
  detail::require(batch.ndim() == 2, "knn_neighbors: batch must be B x D");
  const int B = batch.rows(), D = batch.cols();
  detail::require(k >= 1 && B > k,
                  "knn_neighbors: need batch size > k (got B=" +
                      std::to_string(B) + ", k=" + std::to_string(k) + ")");

  std::vector<std::vector<int>> result(static_cast<std::size_t>(B));
  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(B - 1));
  for (int i = 0; i < B; ++i) {
    std::size_t w = 0;
    for (int j = 0; j < B; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (int f = 0; f < D; ++f) {
        const double diff = batch.at(i, f) - batch.at(j, f);
        d2 += diff * diff;
      }
      dist[w++] = {d2, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    auto& row = result[static_cast<std::size_t>(i)];
    row.reserve(static_cast<std::size_t>(k));
    for (int q = 0; q < k; ++q) row.push_back(dist[static_cast<std::size_t>(q)].second);
  }
  return result;
}

// Beta(alpha, alpha) draw from two Gamma(alpha, 1) variates.
inline double sample_beta(double alpha, Rng& rng) {
  detail::require(alpha > 0.0, "sample_beta: alpha must be positive");
  const double g1 = rng.gamma(alpha);
  const double g2 = rng.gamma(alpha);
  const double denom = g1 + g2;
  if (denom <= 0.0) return 0.5;  // both gammas underflowed; symmetric center
  return g1 / denom;
}

struct MixedBatch {
  Tensor x_mix;                  // B x D interpolated features
  std::vector<int> y_orig;       // labels the loss consumes
  Tensor y_mix;                  // B x C soft labels (diagnostic output)
  std::vector<double> lambdas;   // per-sample anchor coefficients, all >= 0.5
  std::vector<int> neighbor;     // chosen feature partner per anchor
  std::vector<int> perm_partner; // label partner from the batch permutation
};

// Interpolate each anchor toward one of its k nearest in-batch neighbors:
//   lambda' = max(lambda, 1 - lambda), lambda ~ Beta(alpha, alpha) per sample,
//   x_mix_i = lambda' x_i + (1 - lambda') x_j.
// Soft labels mix the anchor with a random permutation partner; they are
// exported for inspection while training keeps the original labels.
//
// Draw order per batch: the label permutation, then per sample the neighbor
// choice followed by the Beta draw.
inline MixedBatch mixup_batch(const Tensor& x, const std::vector<int>& y,
                              int num_classes, const MixupConfig& cfg,
                              Rng& rng) {
  cfg.validate();
  const int B = x.rows(), D = x.cols();
  detail::require(static_cast<std::size_t>(B) == y.size(),
                  "mixup_batch: one label per row required");

  MixedBatch out;
  out.y_orig = y;
  out.x_mix = Tensor::zeros({B, D});
  out.y_mix = Tensor::zeros({B, num_classes});
  out.lambdas.assign(static_cast<std::size_t>(B), 1.0);
  out.neighbor.assign(static_cast<std::size_t>(B), -1);
  out.perm_partner.assign(static_cast<std::size_t>(B), -1);

  if (!cfg.enabled) {
    out.x_mix = x.clone();
    for (int i = 0; i < B; ++i) {
      out.neighbor[static_cast<std::size_t>(i)] = i;
      out.perm_partner[static_cast<std::size_t>(i)] = i;
      out.y_mix.at(i, y[static_cast<std::size_t>(i)]) = 1.0;
    }
    return out;
  }

  const auto neighbors = knn_neighbors(x, cfg.k_neighbors);
  const std::vector<int> perm = rng.permutation(B);

  for (int i = 0; i < B; ++i) {
    const auto& cand = neighbors[static_cast<std::size_t>(i)];
    const int j = cand[rng.bounded(cand.size())];
    const double lam = sample_beta(cfg.alpha_beta, rng);
    const double lam_max = std::max(lam, 1.0 - lam);

    out.lambdas[static_cast<std::size_t>(i)] = lam_max;
    out.neighbor[static_cast<std::size_t>(i)] = j;
    out.perm_partner[static_cast<std::size_t>(i)] = perm[static_cast<std::size_t>(i)];

    for (int f = 0; f < D; ++f)
      out.x_mix.at(i, f) = lam_max * x.at(i, f) + (1.0 - lam_max) * x.at(j, f);

    const int yp = y[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    out.y_mix.at(i, y[static_cast<std::size_t>(i)]) += lam_max;
    out.y_mix.at(i, yp) += 1.0 - lam_max;
  }
  return out;
}

}  // namespace qclmix
