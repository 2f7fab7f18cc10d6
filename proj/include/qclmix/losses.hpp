#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qclmix/tensor.hpp"

namespace qclmix {

struct LossConfig {
  double gamma = 3.0;          // focal exponent
  double beta1 = 0.8;          // intra-compactness weight
  double tau = 0.2;            // contrastive temperature
  double margin = 0.5;         // triplet margin
  double alpha_loss = 0.5;     // classification-vs-metric mixing weight
  double miner_epsilon = 0.1;  // similarity slack for triplet mining

  void validate() const {
    detail::require(gamma >= 0.0, "LossConfig: gamma must be >= 0");
    detail::require(tau > 0.0, "LossConfig: tau must be > 0");
    detail::require(margin > 0.0, "LossConfig: margin must be > 0");
    detail::require(alpha_loss >= 0.0 && alpha_loss <= 1.0,
                    "LossConfig: alpha_loss must lie in [0, 1]");
  }
};

struct LossBreakdown {
  double focal = 0.0;
  double intra = 0.0;
  double inter = 0.0;
  double fvl = 0.0;
  double supcon = 0.0;
  double triplet = 0.0;
  double hybrid = 0.0;
  bool supcon_no_positives = false;
};

namespace detail {

inline void check_labels(const std::vector<int>& y, int num_classes,
                         const char* op) {
  for (int v : y)
    require(v >= 0 && v < num_classes,
            std::string(op) + ": label out of range");
}

}  // namespace detail

// Mean over the batch of (1 - p_t)^gamma * CE, with p_t = exp(-CE) and the
// true-class probability clamped to [1e-12, 1].
inline Tensor focal_loss(const Tensor& logits, const std::vector<int>& y,
                         double gamma) {
  detail::require(logits.ndim() == 2, "focal_loss: logits must be B x C");
  detail::require(static_cast<std::size_t>(logits.rows()) == y.size(),
                  "focal_loss: one label per row required");
  detail::check_labels(y, logits.cols(), "focal_loss");
  Tensor probs = softmax(logits, 1);
  Tensor p_true = clamp_min(gather_cols(probs, y), 1e-12);
  Tensor ce = neg(log(p_true));          // B x 1
  Tensor p_t = exp(neg(ce));             // = clamped softmax probability
  Tensor weight = powc(add_scalar(neg(p_t), 1.0), gamma);
  return reduce_mean(mul(weight, ce));
}

// Mean squared distance from each embedding to its class centroid.
inline Tensor intra_variance(const Tensor& emb, const std::vector<int>& y,
                             const Tensor& centroids) {
  detail::require(emb.ndim() == 2 && centroids.ndim() == 2,
                  "intra_variance: operands must be 2-d");
  detail::require(emb.cols() == centroids.cols(),
                  "intra_variance: embedding width mismatch");
  detail::check_labels(y, centroids.rows(), "intra_variance");
  Tensor own = gather_rows(centroids, y);
  Tensor diff = sub(emb, own);
  return reduce_mean(sum_axis(square(diff), 1));
}

// -log sigmoid(mean pairwise centroid distance) over the classes present in
// the batch; 0 when fewer than two classes are present. The mean over ordered
// pairs equals the mean over unordered pairs, so pairs are enumerated once.
inline Tensor inter_separation(const Tensor& centroids,
                               const std::vector<int>& classes_in_batch) {
  std::vector<int> cls(classes_in_batch);
  std::sort(cls.begin(), cls.end());
  cls.erase(std::unique(cls.begin(), cls.end()), cls.end());
  detail::check_labels(cls, centroids.rows(), "inter_separation");
  if (cls.size() < 2) return Tensor::scalar(0.0);

  std::vector<int> lhs, rhs;
  for (std::size_t a = 0; a < cls.size(); ++a)
    for (std::size_t b = a + 1; b < cls.size(); ++b) {
      lhs.push_back(cls[a]);
      rhs.push_back(cls[b]);
    }
  Tensor diff = sub(gather_rows(centroids, lhs), gather_rows(centroids, rhs));
  Tensor dists = sqrt(sum_axis(square(diff), 1));  // P x 1
  Tensor mean_dist = reduce_mean(dists);
  return neg(log(sigmoid(mean_dist)));
}

struct FvlResult {
  Tensor total;
  Tensor focal;
  Tensor intra;
  Tensor inter;
};

// focal + beta1 * intra (batch means) with the separation penalty added once
// per batch, unweighted.
inline FvlResult focal_variance_loss(const Tensor& logits,
                                     const std::vector<int>& y,
                                     const Tensor& emb, const Tensor& centroids,
                                     const LossConfig& cfg) {
  FvlResult r;
  r.focal = focal_loss(logits, y, cfg.gamma);
  r.intra = intra_variance(emb, y, centroids);
  r.inter = inter_separation(centroids, y);
  r.total = add(add(r.focal, scale(r.intra, cfg.beta1)), r.inter);
  return r;
}

// Supervised contrastive loss on L2-normalized embeddings with cosine
// similarity. Anchors without positives contribute nothing and are excluded
// from the outer average; if no anchor has a positive the loss is 0 and
// *no_positives is set.
inline Tensor supcon_loss(const Tensor& emb, const std::vector<int>& y,
                          double tau, bool* no_positives = nullptr) {
  detail::require(emb.ndim() == 2, "supcon_loss: embeddings must be B x d");
  const int B = emb.rows();
  detail::require(B >= 2, "supcon_loss: need at least two samples");
  detail::require(static_cast<std::size_t>(B) == y.size(),
                  "supcon_loss: one label per embedding required");
  detail::require(tau > 0.0, "supcon_loss: tau must be positive");
  if (no_positives) *no_positives = false;

  // Row-normalize; guard zero rows with a tiny floor on the norm.
  Tensor norms = clamp_min(sqrt(sum_axis(square(emb), 1)), 1e-12);
  Tensor unit = div_colvec(emb, norms);
  Tensor sims = scale(matmul(unit, transpose(unit)), 1.0 / tau);

  // Masks are constants: no gradient flows through them.
  Tensor off_diag = Tensor::zeros({B, B});
  Tensor pos_mask = Tensor::zeros({B, B});
  std::vector<double> pos_count(static_cast<std::size_t>(B), 0.0);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j) {
      if (i == j) continue;
      off_diag.at(i, j) = 1.0;
      if (y[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(j)]) {
        pos_mask.at(i, j) = 1.0;
        pos_count[static_cast<std::size_t>(i)] += 1.0;
      }
    }

  int anchors_with_pos = 0;
  for (double c : pos_count)
    if (c > 0.0) ++anchors_with_pos;
  if (anchors_with_pos == 0) {
    if (no_positives) *no_positives = true;
    return Tensor::scalar(0.0);
  }

  // exp(sim / tau) is bounded by exp(1 / tau); no max-shift needed.
  Tensor exp_sims = mul(exp(sims), off_diag);
  Tensor denom = log(sum_axis(exp_sims, 1));  // B x 1, every row has B-1 terms

  // Per anchor: sum over positives of (sim_ip - log denom_i).
  Tensor pos_sims = sum_axis(mul(sims, pos_mask), 1);     // B x 1
  Tensor count_col = Tensor::zeros({B, 1});
  Tensor inv_count = Tensor::zeros({B, 1});
  for (int i = 0; i < B; ++i) {
    count_col.at(i, 0) = pos_count[static_cast<std::size_t>(i)];
    inv_count.at(i, 0) = pos_count[static_cast<std::size_t>(i)] > 0.0
                             ? 1.0 / pos_count[static_cast<std::size_t>(i)]
                             : 0.0;
  }
  Tensor per_anchor = mul(sub(pos_sims, mul(denom, count_col)), inv_count);
  Tensor total = reduce_sum(neg(per_anchor));
  return scale(total, 1.0 / static_cast<double>(anchors_with_pos));
}

struct TripletIndex {
  int anchor;
  int positive;
  int negative;
};

// Multi-similarity pair mining on cosine similarities of normalized
// embeddings. For each anchor, keep negatives harder than the easiest
// positive minus epsilon and positives harder than the hardest negative plus
// epsilon, then emit every kept (positive, negative) pair. Ordering is
// deterministic by (anchor, positive, negative).
inline std::vector<TripletIndex> ms_mine_triplets(const Tensor& emb,
                                                  const std::vector<int>& y,
                                                  double epsilon) {
  detail::require(emb.ndim() == 2, "ms_mine_triplets: embeddings must be B x d");
  const int B = emb.rows(), d = emb.cols();
  detail::require(B >= 3, "ms_mine_triplets: need at least three samples");
  detail::require(static_cast<std::size_t>(B) == y.size(),
                  "ms_mine_triplets: one label per embedding required");

  // Cosine similarity on raw values; mining is not differentiated.
  std::vector<double> unit(static_cast<std::size_t>(B) * d);
  for (int i = 0; i < B; ++i) {
    double n = 0.0;
    for (int j = 0; j < d; ++j) n += emb.at(i, j) * emb.at(i, j);
    n = std::max(std::sqrt(n), 1e-12);
    for (int j = 0; j < d; ++j)
      unit[static_cast<std::size_t>(i) * d + j] = emb.at(i, j) / n;
  }
  auto sim = [&](int a, int b) {
    double s = 0.0;
    for (int j = 0; j < d; ++j)
      s += unit[static_cast<std::size_t>(a) * d + j] *
           unit[static_cast<std::size_t>(b) * d + j];
    return s;
  };

  std::vector<TripletIndex> out;
  for (int a = 0; a < B; ++a) {
    double min_pos = 0.0, max_neg = 0.0;
    bool has_pos = false, has_neg = false;
    for (int j = 0; j < B; ++j) {
      if (j == a) continue;
      const double s = sim(a, j);
      if (y[static_cast<std::size_t>(j)] == y[static_cast<std::size_t>(a)]) {
        min_pos = has_pos ? std::min(min_pos, s) : s;
        has_pos = true;
      } else {
        max_neg = has_neg ? std::max(max_neg, s) : s;
        has_neg = true;
      }
    }
    if (!has_pos || !has_neg) continue;
    std::vector<int> kept_pos, kept_neg;
    for (int j = 0; j < B; ++j) {
      if (j == a) continue;
      const double s = sim(a, j);
      if (y[static_cast<std::size_t>(j)] == y[static_cast<std::size_t>(a)]) {
        if (s < max_neg + epsilon) kept_pos.push_back(j);
      } else {
        if (s > min_pos - epsilon) kept_neg.push_back(j);
      }
    }
    for (int p : kept_pos)
      for (int n : kept_neg) out.push_back({a, p, n});
  }
  return out;
}

// Mean hinge over mined triplets of squared-distance gaps on unnormalized
// embeddings; 0 for an empty triplet set.
inline Tensor triplet_loss(const Tensor& emb,
                           const std::vector<TripletIndex>& triplets,
                           double margin) {
  if (triplets.empty()) return Tensor::scalar(0.0);
  std::vector<int> ai, pi, ni;
  ai.reserve(triplets.size());
  pi.reserve(triplets.size());
  ni.reserve(triplets.size());
  for (const auto& t : triplets) {
    ai.push_back(t.anchor);
    pi.push_back(t.positive);
    ni.push_back(t.negative);
  }
  Tensor ea = gather_rows(emb, ai);
  Tensor ep = gather_rows(emb, pi);
  Tensor en = gather_rows(emb, ni);
  Tensor d_pos = sum_axis(square(sub(ea, ep)), 1);
  Tensor d_neg = sum_axis(square(sub(ea, en)), 1);
  Tensor hinge = relu(add_scalar(sub(d_pos, d_neg), margin));
  return reduce_mean(hinge);
}

struct HybridResult {
  Tensor total;
  LossBreakdown parts;
};

// alpha * (focal-variance) + (1 - alpha) * (supcon + triplet), computed
// against the original labels.
inline HybridResult hybrid_loss(const Tensor& logits, const Tensor& emb,
                                const std::vector<int>& y,
                                const Tensor& centroids,
                                const LossConfig& cfg) {
  cfg.validate();
  HybridResult r;
  FvlResult fvl = focal_variance_loss(logits, y, emb, centroids, cfg);
  bool no_pos = false;
  Tensor supcon = supcon_loss(emb, y, cfg.tau, &no_pos);
  Tensor triplet = triplet_loss(
      emb, ms_mine_triplets(emb, y, cfg.miner_epsilon), cfg.margin);

  r.total = add(scale(fvl.total, cfg.alpha_loss),
                scale(add(supcon, triplet), 1.0 - cfg.alpha_loss));

  r.parts.focal = fvl.focal.value_scalar();
  r.parts.intra = fvl.intra.value_scalar();
  r.parts.inter = fvl.inter.value_scalar();
  r.parts.fvl = fvl.total.value_scalar();
  r.parts.supcon = supcon.value_scalar();
  r.parts.triplet = triplet.value_scalar();
  r.parts.hybrid = r.total.value_scalar();
  r.parts.supcon_no_positives = no_pos;
  return r;
}

}  // namespace qclmix
