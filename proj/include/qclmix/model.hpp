#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "qclmix/rng.hpp"
#include "qclmix/tensor.hpp"

namespace qclmix {

struct ModelConfig {
  int input_dim = 0;   // D, from the data
  int num_classes = 0; // C, from the data
  int hidden1 = 64;
  int hidden2 = 32;
  int proj_hidden = 16;
  int emb_dim = 8;
  double leaky_slope = 0.01;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  bool use_quantum = true;
  bool use_attention = true;
  bool use_mixup = true;  // consumed by the training loop, not the forward pass

  void validate() const {
    detail::require(input_dim >= 1, "ModelConfig: input_dim must be >= 1");
    detail::require(num_classes >= 2, "ModelConfig: num_classes must be >= 2");
    detail::require(hidden1 >= 1 && hidden2 >= 1 && proj_hidden >= 1 &&
                        emb_dim >= 1,
                    "ModelConfig: layer widths must be positive");
  }
};

// One learnable array plus its optimizer policy.
struct ParamRef {
  std::string name;
  Tensor* tensor;
  bool weight_decay;  // rotation angles and batch-norm affines are excluded
};

struct ModelParams {
  // Feature-rotation layers: per-feature angles.
  Tensor theta1;  // D
  Tensor theta2;  // hidden1

  // Single-head self-attention over a length-1 sequence, with output
  // projection. W_Q/W_K cannot influence the output at sequence length 1 but
  // are kept so the block has the standard parameter set.
  Tensor Wq, bq, Wk, bk, Wv, bv, Wo, bo;  // D x D and D

  Tensor fc1_w, fc1_b;  // D x hidden1, hidden1
  Tensor bn1_gamma, bn1_beta, bn1_rm, bn1_rv;
  Tensor fc2_w, fc2_b;  // hidden1 x hidden2, hidden2
  Tensor bn2_gamma, bn2_beta, bn2_rm, bn2_rv;

  // Projection head: hidden2 -> proj_hidden -> emb_dim.
  Tensor proj1_w, proj1_b;
  Tensor pbn_gamma, pbn_beta, pbn_rm, pbn_rv;
  Tensor proj2_w, proj2_b;

  Tensor fc3_w, fc3_b;  // classifier on the hidden2 features

  // Class centroids live with the model so one optimizer updates everything.
  Tensor centroids;  // C x emb_dim

  std::vector<ParamRef> learnable() {
    return {
        {"theta1", &theta1, false},
        {"theta2", &theta2, false},
        {"attn.Wq", &Wq, true},
        {"attn.bq", &bq, true},
        {"attn.Wk", &Wk, true},
        {"attn.bk", &bk, true},
        {"attn.Wv", &Wv, true},
        {"attn.bv", &bv, true},
        {"attn.Wo", &Wo, true},
        {"attn.bo", &bo, true},
        {"fc1.w", &fc1_w, true},
        {"fc1.b", &fc1_b, true},
        {"bn1.gamma", &bn1_gamma, false},
        {"bn1.beta", &bn1_beta, false},
        {"fc2.w", &fc2_w, true},
        {"fc2.b", &fc2_b, true},
        {"bn2.gamma", &bn2_gamma, false},
        {"bn2.beta", &bn2_beta, false},
        {"proj1.w", &proj1_w, true},
        {"proj1.b", &proj1_b, true},
        {"pbn.gamma", &pbn_gamma, false},
        {"pbn.beta", &pbn_beta, false},
        {"proj2.w", &proj2_w, true},
        {"proj2.b", &proj2_b, true},
        {"fc3.w", &fc3_w, true},
        {"fc3.b", &fc3_b, true},
        {"centroids", &centroids, true},
    };
  }

  // Every array including running statistics, for serialization.
  std::vector<ParamRef> all_arrays() {
    auto refs = learnable();
    refs.push_back({"bn1.running_mean", &bn1_rm, false});
    refs.push_back({"bn1.running_var", &bn1_rv, false});
    refs.push_back({"bn2.running_mean", &bn2_rm, false});
    refs.push_back({"bn2.running_var", &bn2_rv, false});
    refs.push_back({"pbn.running_mean", &pbn_rm, false});
    refs.push_back({"pbn.running_var", &pbn_rv, false});
    return refs;
  }

  ModelParams clone() const {
    ModelParams c = *this;
    for (auto ref : c.all_arrays()) *ref.tensor = ref.tensor->clone();
    return c;
  }
};

namespace detail {

inline Tensor uniform_tensor(std::vector<int> shape, double lo, double hi,
                             Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor dense_init(int fan_in, int fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform_tensor({fan_in, fan_out}, -bound, bound, rng);
}

inline Tensor bias_init(int fan_in, int n, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform_tensor({n}, -bound, bound, rng);
}

}  // namespace detail

// Dense weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)); angles ~ U(-pi, pi);
// centroids ~ N(0, 0.1^2); batch-norm affines at identity. Deterministic in
// the seed.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const double pi = std::numbers::pi;
  Rng rng = Rng(seed).fork(0x6d6f64656cULL);  // model stream
  const int D = cfg.input_dim, H1 = cfg.hidden1, H2 = cfg.hidden2;
  const int P = cfg.proj_hidden, E = cfg.emb_dim, C = cfg.num_classes;

  ModelParams p;
  p.theta1 = detail::uniform_tensor({D}, -pi, pi, rng);
  p.theta2 = detail::uniform_tensor({H1}, -pi, pi, rng);

  p.Wq = detail::dense_init(D, D, rng);
  p.bq = detail::bias_init(D, D, rng);
  p.Wk = detail::dense_init(D, D, rng);
  p.bk = detail::bias_init(D, D, rng);
  p.Wv = detail::dense_init(D, D, rng);
  p.bv = detail::bias_init(D, D, rng);
  p.Wo = detail::dense_init(D, D, rng);
  p.bo = detail::bias_init(D, D, rng);

  p.fc1_w = detail::dense_init(D, H1, rng);
  p.fc1_b = detail::bias_init(D, H1, rng);
  p.bn1_gamma = Tensor::from({H1}, std::vector<double>(H1, 1.0));
  p.bn1_beta = Tensor::zeros({H1});
  p.bn1_rm = Tensor::zeros({H1});
  p.bn1_rv = Tensor::from({H1}, std::vector<double>(H1, 1.0));

  p.fc2_w = detail::dense_init(H1, H2, rng);
  p.fc2_b = detail::bias_init(H1, H2, rng);
  p.bn2_gamma = Tensor::from({H2}, std::vector<double>(H2, 1.0));
  p.bn2_beta = Tensor::zeros({H2});
  p.bn2_rm = Tensor::zeros({H2});
  p.bn2_rv = Tensor::from({H2}, std::vector<double>(H2, 1.0));

  p.proj1_w = detail::dense_init(H2, P, rng);
  p.proj1_b = detail::bias_init(H2, P, rng);
  p.pbn_gamma = Tensor::from({P}, std::vector<double>(P, 1.0));
  p.pbn_beta = Tensor::zeros({P});
  p.pbn_rm = Tensor::zeros({P});
  p.pbn_rv = Tensor::from({P}, std::vector<double>(P, 1.0));
  p.proj2_w = detail::dense_init(P, E, rng);
  p.proj2_b = detail::bias_init(P, E, rng);

  p.fc3_w = detail::dense_init(H2, C, rng);
  p.fc3_b = detail::bias_init(H2, C, rng);

  p.centroids = Tensor::zeros({C, E});
  for (double& v : p.centroids.data()) v = rng.normal(0.0, 0.1);

  for (auto ref : p.learnable()) ref.tensor->set_requires_grad();
  return p;
}

// Feature rotation with a per-sample gate:
//   x_proj = x * cos(theta) (per column), s_i = sigmoid(<x_proj_i, sin(theta)>),
//   output row i = x_proj_i * s_i.
inline Tensor qe_forward(const Tensor& x, const Tensor& theta) {
  detail::require(x.ndim() == 2, "qe_forward: input must be B x d");
  detail::require(static_cast<std::size_t>(x.cols()) == theta.numel(),
                  "qe_forward: theta length must equal feature count");
  const int d = x.cols();
  Tensor x_proj = mul_rowvec(x, cos(theta));
  Tensor gate = sigmoid(matmul(x_proj, reshape(sin(theta), {d, 1})));  // B x 1
  return mul_colvec(x_proj, gate);
}

// Self-attention block over a length-1 sequence with residual connection.
// The softmax over a single score is identically 1, so the value path is the
// whole story, but the scores are still computed so the parameter set and
// gradient structure match the standard block.
inline Tensor attention_forward(const Tensor& x, const ModelParams& p) {
  detail::require(x.ndim() == 2, "attention_forward: input must be B x D");
  detail::require(x.cols() == p.Wv.rows(),
                  "attention_forward: feature width mismatch");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(x.cols()));
  Tensor q = add_rowvec(matmul(x, p.Wq), p.bq);
  Tensor k = add_rowvec(matmul(x, p.Wk), p.bk);
  Tensor v = add_rowvec(matmul(x, p.Wv), p.bv);
  Tensor scores = scale(sum_axis(mul(q, k), 1), inv_sqrt_d);  // B x 1
  Tensor weights = softmax(scores, 1);                        // all ones
  Tensor attended = mul_colvec(v, weights);
  Tensor projected = add_rowvec(matmul(attended, p.Wo), p.bo);
  return add(x, projected);
}

struct ForwardOutput {
  Tensor logits;       // B x C
  Tensor embedding;    // B x emb_dim
  Tensor penultimate;  // B x hidden2
};

// Shared trunk producing classifier logits and projection-head embeddings in
// one pass, so train-mode batch-norm statistics update exactly once per batch.
inline ForwardOutput model_forward(const Tensor& x, ModelParams& p,
                                   const ModelConfig& cfg, Mode mode) {
  detail::require(x.ndim() == 2 && x.cols() == cfg.input_dim,
                  "model_forward: input must be B x input_dim");

  Tensor h = cfg.use_quantum ? qe_forward(x, p.theta1) : x;
  if (cfg.use_attention) h = attention_forward(h, p);

  h = add_rowvec(matmul(h, p.fc1_w), p.fc1_b);
  h = batchnorm(h, p.bn1_gamma, p.bn1_beta, p.bn1_rm, p.bn1_rv, mode,
                cfg.bn_momentum, cfg.bn_eps);
  h = leaky_relu(h, cfg.leaky_slope);

  if (cfg.use_quantum) h = qe_forward(h, p.theta2);

  h = add_rowvec(matmul(h, p.fc2_w), p.fc2_b);
  h = batchnorm(h, p.bn2_gamma, p.bn2_beta, p.bn2_rm, p.bn2_rv, mode,
                cfg.bn_momentum, cfg.bn_eps);
  h = leaky_relu(h, cfg.leaky_slope);

  ForwardOutput out;
  out.penultimate = h;
  out.logits = add_rowvec(matmul(h, p.fc3_w), p.fc3_b);

  Tensor e = add_rowvec(matmul(h, p.proj1_w), p.proj1_b);
  e = batchnorm(e, p.pbn_gamma, p.pbn_beta, p.pbn_rm, p.pbn_rv, mode,
                cfg.bn_momentum, cfg.bn_eps);
  e = relu(e);
  out.embedding = add_rowvec(matmul(e, p.proj2_w), p.proj2_b);
  return out;
}

}  // namespace qclmix
