#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "qclmix/common.hpp"

namespace qclmix {

// Reverse-mode autodiff over dense row-major double tensors (rank 1 or 2).
//
// Tensor is a cheap handle onto shared storage. Operations executed while a
// Tape is active (see TapeScope) record a backward closure; Tape::backward
// replays them in reverse. Gradients of leaf tensors accumulate across
// backward calls; non-leaf gradients are reset at the start of each call.

struct TensorStorage {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until needed, then value.size()
  bool requires_grad = false;
  bool is_leaf = true;
};

class Tensor {
 public:
  Tensor() : s_(std::make_shared<TensorStorage>()) {}

  static Tensor zeros(std::vector<int> shape) {
    Tensor t;
    t.s_->shape = std::move(shape);
    t.s_->value.assign(t.checked_numel(), 0.0);
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<double> data) {
    Tensor t;
    t.s_->shape = std::move(shape);
    t.s_->value = std::move(data);
    detail::require(t.s_->value.size() == t.checked_numel(),
                    "Tensor::from: data length does not match shape");
    return t;
  }

  static Tensor scalar(double v) { return from({1}, {v}); }

  static Tensor row_major(int rows, int cols, std::vector<double> data) {
    return from({rows, cols}, std::move(data));
  }

  const std::vector<int>& shape() const { return s_->shape; }
  int ndim() const { return static_cast<int>(s_->shape.size()); }
  std::size_t numel() const { return s_->value.size(); }
  int rows() const { return ndim() == 2 ? s_->shape[0] : 1; }
  int cols() const {
    return ndim() == 2 ? s_->shape[1] : (ndim() == 1 ? s_->shape[0] : 1);
  }

  std::vector<double>& data() { return s_->value; }
  const std::vector<double>& data() const { return s_->value; }

  double at(int i) const { return s_->value[static_cast<std::size_t>(i)]; }
  double at(int i, int j) const {
    return s_->value[static_cast<std::size_t>(i) * cols() + j];
  }
  double& at(int i) { return s_->value[static_cast<std::size_t>(i)]; }
  double& at(int i, int j) {
    return s_->value[static_cast<std::size_t>(i) * cols() + j];
  }

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool b = true) {
    s_->requires_grad = b;
    return *this;
  }
  bool is_leaf() const { return s_->is_leaf; }

  void ensure_grad() {
    if (s_->grad.size() != s_->value.size()) s_->grad.assign(s_->value.size(), 0.0);
  }
  void zero_grad() { s_->grad.assign(s_->value.size(), 0.0); }
  bool has_grad() const { return s_->grad.size() == s_->value.size(); }
  std::vector<double>& grad() {
    ensure_grad();
    return s_->grad;
  }

  double value_scalar() const {
    detail::require(numel() == 1, "value_scalar: tensor is not a scalar");
    return s_->value[0];
  }

  // Deep copy with fresh storage (gradients are not copied).
  Tensor clone() const {
    Tensor t;
    t.s_->shape = s_->shape;
    t.s_->value = s_->value;
    t.s_->requires_grad = s_->requires_grad;
    return t;
  }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

  void mark_non_leaf() { s_->is_leaf = false; }

 private:
  std::size_t checked_numel() const {
    std::size_t n = 1;
    for (int d : s_->shape) {
      detail::require(d > 0, "Tensor: shape dimensions must be positive");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::shared_ptr<TensorStorage> s_;
};

class Tape {
 public:
  void record(Tensor output, std::function<void()> backward_fn) {
    output.mark_non_leaf();
    outputs_.push_back(std::move(output));
    ops_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return ops_.size(); }

  void clear() {
    ops_.clear();
    outputs_.clear();
  }

  // Seed d(loss)/d(loss) = 1 and replay recorded ops in reverse. Non-leaf
  // gradients are zeroed first so leaf gradients accumulate exactly one
  // jacobian-vector product per call.
  void backward(Tensor& loss) {
    detail::require(loss.numel() == 1, "backward: loss must be a scalar");
    for (auto& out : outputs_) out.zero_grad();
    loss.grad()[0] += 1.0;
    for (std::size_t i = ops_.size(); i > 0; --i) ops_[i - 1]();
  }

 private:
  std::vector<std::function<void()>> ops_;
  std::vector<Tensor> outputs_;
};

namespace detail {
inline Tape*& tape_slot() {
  thread_local Tape* tape = nullptr;
  return tape;
}
}  // namespace detail

inline Tape* active_tape() { return detail::tape_slot(); }

// One tape per training run; scope it around the forward+backward pass.
class TapeScope {
 public:
  explicit TapeScope(Tape& t) : prev_(detail::tape_slot()) {
    detail::tape_slot() = &t;
  }
  ~TapeScope() { detail::tape_slot() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

inline void backward(Tensor& loss) {
  Tape* t = active_tape();
  detail::require(t != nullptr, "backward: no active tape");
  t->backward(loss);
}

// ---------------------------------------------------------------------------
// Op plumbing

namespace detail {

inline bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

inline void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v))
      throw numeric_error(std::string(op) + ": non-finite input value");
  }
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": operands must have identical shapes");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise unary ops

namespace detail {

template <typename Fwd, typename Dfn>
Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Dfn dfn,
                bool finite_check = true) {
  if (finite_check) check_finite(x, name);
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  if (tracking({&x})) {
    out.set_requires_grad();
    Tensor xi = x, oi = out;
    active_tape()->record(out, [xi, oi, dfn]() mutable {
      auto& xg = xi.grad();
      const auto& og = oi.grad();
      const auto& xv2 = xi.data();
      const auto& ov2 = oi.data();
      for (std::size_t i = 0; i < xg.size(); ++i)
        xg[i] += og[i] * dfn(xv2[i], ov2[i]);
    });
  }
  return out;
}

}  // namespace detail

inline Tensor cos(const Tensor& x) {
  return detail::unary_op(
      x, "cos", [](double v) { return std::cos(v); },
      [](double v, double) { return -std::sin(v); });
}

inline Tensor sin(const Tensor& x) {
  return detail::unary_op(
      x, "sin", [](double v) { return std::sin(v); },
      [](double v, double) { return std::cos(v); });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      x, "sigmoid",
      [](double v) {
        // Split by sign to avoid overflow in exp.
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double o) { return o * (1.0 - o); });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary_op(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double o) { return o; });
}

inline Tensor log(const Tensor& x) {
  detail::check_finite(x, "log");
  for (double v : x.data())
    detail::require(v > 0.0, "log: input must be strictly positive");
  return detail::unary_op(
      x, "log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; }, false);
}

inline Tensor relu(const Tensor& x) {
  return detail::unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      // Subgradient 0 at the kink.
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor leaky_relu(const Tensor& x, double slope = 0.01) {
  return detail::unary_op(
      x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

inline Tensor neg(const Tensor& x) {
  return detail::unary_op(
      x, "neg", [](double v) { return -v; },
      [](double, double) { return -1.0; });
}

inline Tensor square(const Tensor& x) {
  return detail::unary_op(
      x, "square", [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

inline Tensor sqrt(const Tensor& x) {
  detail::check_finite(x, "sqrt");
  for (double v : x.data())
    detail::require(v >= 0.0, "sqrt: input must be non-negative");
  return detail::unary_op(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      // Subgradient 0 at x = 0 (the true one-sided derivative is infinite).
      [](double, double o) { return o > 0.0 ? 0.5 / o : 0.0; }, false);
}

// x^p for x >= 0.
inline Tensor powc(const Tensor& x, double p) {
  detail::check_finite(x, "powc");
  for (double v : x.data())
    detail::require(v >= 0.0, "powc: input must be non-negative");
  return detail::unary_op(
      x, "powc", [p](double v) { return std::pow(v, p); },
      [p](double v, double) {
        if (p == 0.0) return 0.0;
        // Bounded subgradient at v = 0 when p < 1 (true derivative diverges).
        if (v == 0.0) return p == 1.0 ? 1.0 : 0.0;
        return p * std::pow(v, p - 1.0);
      },
      false);
}

inline Tensor clamp_min(const Tensor& x, double lo) {
  return detail::unary_op(
      x, "clamp_min", [lo](double v) { return v < lo ? lo : v; },
      [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Elementwise binary ops (identical shapes; no general broadcasting)

namespace detail {

template <typename Fwd, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd,
                 DA da, DB db) {
  check_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  if (tracking({&a, &b})) {
    out.set_requires_grad();
    Tensor ai = a, bi = b, oi = out;
    active_tape()->record(out, [ai, bi, oi, da, db]() mutable {
      const auto& og = oi.grad();
      const auto& av2 = ai.data();
      const auto& bv2 = bi.data();
      if (ai.requires_grad()) {
        auto& ag = ai.grad();
        for (std::size_t i = 0; i < ag.size(); ++i)
          ag[i] += og[i] * da(av2[i], bv2[i]);
      }
      if (bi.requires_grad()) {
        auto& bg = bi.grad();
        for (std::size_t i = 0; i < bg.size(); ++i)
          bg[i] += og[i] * db(av2[i], bv2[i]);
      }
    });
  }
  return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary_op(
      x, "scale", [c](double v) { return c * v; },
      [c](double, double) { return c; }, false);
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary_op(
      x, "add_scalar", [c](double v) { return v + c; },
      [](double, double) { return 1.0; }, false);
}

// ---------------------------------------------------------------------------
// Row/column broadcasts: X is B x F, v has F entries (row vector applied per
// row) or B entries (column scalar applied per sample).

namespace detail {

inline void check_rowvec(const Tensor& x, const Tensor& v, const char* op) {
  require(x.ndim() == 2, std::string(op) + ": matrix operand must be 2-d");
  require(static_cast<std::size_t>(x.cols()) == v.numel(),
          std::string(op) + ": vector length must equal column count");
}

inline void check_colvec(const Tensor& x, const Tensor& v, const char* op) {
  require(x.ndim() == 2, std::string(op) + ": matrix operand must be 2-d");
  require(static_cast<std::size_t>(x.rows()) == v.numel(),
          std::string(op) + ": vector length must equal row count");
}

template <typename Combine, typename DX, typename DV>
Tensor rowvec_op(const Tensor& x, const Tensor& v, const char* name,
                 Combine fwd, DX dx, DV dv) {
  check_rowvec(x, v, name);
  const int B = x.rows(), F = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < F; ++j) out.at(b, j) = fwd(x.at(b, j), v.at(j));
  if (tracking({&x, &v})) {
    out.set_requires_grad();
    Tensor xi = x, vi = v, oi = out;
    active_tape()->record(out, [xi, vi, oi, dx, dv, B, F]() mutable {
      if (xi.requires_grad()) {
        auto& xg = xi.grad();
        for (int b = 0; b < B; ++b)
          for (int j = 0; j < F; ++j)
            xg[static_cast<std::size_t>(b) * F + j] +=
                oi.grad()[static_cast<std::size_t>(b) * F + j] *
                dx(xi.at(b, j), vi.at(j));
      }
      if (vi.requires_grad()) {
        auto& vg = vi.grad();
        for (int b = 0; b < B; ++b)
          for (int j = 0; j < F; ++j)
            vg[static_cast<std::size_t>(j)] +=
                oi.grad()[static_cast<std::size_t>(b) * F + j] *
                dv(xi.at(b, j), vi.at(j));
      }
    });
  }
  return out;
}

template <typename Combine, typename DX, typename DV>
Tensor colvec_op(const Tensor& x, const Tensor& v, const char* name,
                 Combine fwd, DX dx, DV dv) {
  check_colvec(x, v, name);
  const int B = x.rows(), F = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < F; ++j) out.at(b, j) = fwd(x.at(b, j), v.at(b));
  if (tracking({&x, &v})) {
    out.set_requires_grad();
    Tensor xi = x, vi = v, oi = out;
    active_tape()->record(out, [xi, vi, oi, dx, dv, B, F]() mutable {
      if (xi.requires_grad()) {
        auto& xg = xi.grad();
        for (int b = 0; b < B; ++b)
          for (int j = 0; j < F; ++j)
            xg[static_cast<std::size_t>(b) * F + j] +=
                oi.grad()[static_cast<std::size_t>(b) * F + j] *
                dx(xi.at(b, j), vi.at(b));
      }
      if (vi.requires_grad()) {
        auto& vg = vi.grad();
        for (int b = 0; b < B; ++b)
          for (int j = 0; j < F; ++j)
            vg[static_cast<std::size_t>(b)] +=
                oi.grad()[static_cast<std::size_t>(b) * F + j] *
                dv(xi.at(b, j), vi.at(b));
      }
    });
  }
  return out;
}

}  // namespace detail

inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  return detail::rowvec_op(
      x, v, "add_rowvec", [](double a, double b) { return a + b; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Tensor sub_rowvec(const Tensor& x, const Tensor& v) {
  return detail::rowvec_op(
      x, v, "sub_rowvec", [](double a, double b) { return a - b; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  return detail::rowvec_op(
      x, v, "mul_rowvec", [](double a, double b) { return a * b; },
      [](double, double b) { return b; }, [](double a, double) { return a; });
}

inline Tensor div_rowvec(const Tensor& x, const Tensor& v) {
  return detail::rowvec_op(
      x, v, "div_rowvec", [](double a, double b) { return a / b; },
      [](double, double b) { return 1.0 / b; },
      [](double a, double b) { return -a / (b * b); });
}

inline Tensor mul_colvec(const Tensor& x, const Tensor& v) {
  return detail::colvec_op(
      x, v, "mul_colvec", [](double a, double b) { return a * b; },
      [](double, double b) { return b; }, [](double a, double) { return a; });
}

inline Tensor div_colvec(const Tensor& x, const Tensor& v) {
  return detail::colvec_op(
      x, v, "div_colvec", [](double a, double b) { return a / b; },
      [](double, double b) { return 1.0 / b; },
      [](double a, double b) { return -a / (b * b); });
}

// ---------------------------------------------------------------------------
// Matrix ops

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require(a.ndim() == 2 && b.ndim() == 2, "matmul: operands must be 2-d");
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions disagree (" +
                                            std::to_string(a.cols()) + " vs " +
                                            std::to_string(b.rows()) + ")");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      if (aip == 0.0) continue;
      for (int j = 0; j < n; ++j) out.at(i, j) += aip * b.at(p, j);
    }
  if (detail::tracking({&a, &b})) {
    out.set_requires_grad();
    Tensor ai = a, bi = b, oi = out;
    active_tape()->record(out, [ai, bi, oi, m, k, n]() mutable {
      // dA = dC . B^T ; dB = A^T . dC
      if (ai.requires_grad()) {
        auto& ag = ai.grad();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j)
              acc += oi.grad()[static_cast<std::size_t>(i) * n + j] * bi.at(p, j);
            ag[static_cast<std::size_t>(i) * k + p] += acc;
          }
      }
      if (bi.requires_grad()) {
        auto& bg = bi.grad();
        for (int p = 0; p < k; ++p)
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i)
              acc += ai.at(i, p) * oi.grad()[static_cast<std::size_t>(i) * n + j];
            bg[static_cast<std::size_t>(p) * n + j] += acc;
          }
      }
    });
  }
  return out;
}

inline Tensor transpose(const Tensor& x) {
  detail::require(x.ndim() == 2, "transpose: operand must be 2-d");
  const int r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(j, i) = x.at(i, j);
  if (detail::tracking({&x})) {
    out.set_requires_grad();
    Tensor xi = x, oi = out;
    active_tape()->record(out, [xi, oi, r, c]() mutable {
      auto& xg = xi.grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          xg[static_cast<std::size_t>(i) * c + j] +=
              oi.grad()[static_cast<std::size_t>(j) * r + i];
    });
  }
  return out;
}

// Copy reinterpreted under a new shape with the same element count.
inline Tensor reshape(const Tensor& x, std::vector<int> new_shape) {
  Tensor out = Tensor::from(std::move(new_shape), x.data());
  detail::require(out.numel() == x.numel(), "reshape: element count must match");
  if (detail::tracking({&x})) {
    out.set_requires_grad();
    Tensor xi = x, oi = out;
    active_tape()->record(out, [xi, oi]() mutable {
      auto& xg = xi.grad();
      const auto& og = oi.grad();
      for (std::size_t i = 0; i < xg.size(); ++i) xg[i] += og[i];
    });
  }
  return out;
}

// Rows of m selected by index; gradient scatters back with accumulation.
inline Tensor gather_rows(const Tensor& m, const std::vector<int>& idx) {
  detail::require(m.ndim() == 2, "gather_rows: operand must be 2-d");
  const int R = m.rows(), F = m.cols();
  for (int i : idx)
    detail::require(i >= 0 && i < R, "gather_rows: index out of range");
  Tensor out = Tensor::zeros({static_cast<int>(idx.size()), F});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int j = 0; j < F; ++j)
      out.at(static_cast<int>(r), j) = m.at(idx[r], j);
  if (detail::tracking({&m})) {
    out.set_requires_grad();
    Tensor mi = m, oi = out;
    auto indices = idx;
    active_tape()->record(out, [mi, oi, indices, F]() mutable {
      auto& mg = mi.grad();
      for (std::size_t r = 0; r < indices.size(); ++r)
        for (int j = 0; j < F; ++j)
          mg[static_cast<std::size_t>(indices[r]) * F + j] +=
              oi.grad()[r * static_cast<std::size_t>(F) + j];
    });
  }
  return out;
}

// out[b] = m[b, idx[b]] as a B x 1 column.
inline Tensor gather_cols(const Tensor& m, const std::vector<int>& idx) {
  detail::require(m.ndim() == 2, "gather_cols: operand must be 2-d");
  const int B = m.rows(), C = m.cols();
  detail::require(static_cast<std::size_t>(B) == idx.size(),
                  "gather_cols: one index per row required");
  for (int i : idx)
    detail::require(i >= 0 && i < C, "gather_cols: index out of range");
  Tensor out = Tensor::zeros({B, 1});
  for (int b = 0; b < B; ++b) out.at(b, 0) = m.at(b, idx[b]);
  if (detail::tracking({&m})) {
    out.set_requires_grad();
    Tensor mi = m, oi = out;
    auto indices = idx;
    active_tape()->record(out, [mi, oi, indices, C]() mutable {
      auto& mg = mi.grad();
      for (std::size_t b = 0; b < indices.size(); ++b)
        mg[b * static_cast<std::size_t>(C) + indices[b]] += oi.grad()[b];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor reduce_sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (detail::tracking({&x})) {
    out.set_requires_grad();
    Tensor xi = x, oi = out;
    active_tape()->record(out, [xi, oi]() mutable {
      const double g = oi.grad()[0];
      auto& xg = xi.grad();
      for (double& v : xg) v += g;
    });
  }
  return out;
}

inline Tensor reduce_mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  return scale(reduce_sum(x), inv);
}

// axis 0: column totals as a 1-d vector; axis 1: row totals as a B x 1 column.
inline Tensor sum_axis(const Tensor& x, int axis) {
  detail::require(x.ndim() == 2, "sum_axis: operand must be 2-d");
  detail::require(axis == 0 || axis == 1, "sum_axis: axis must be 0 or 1");
  const int B = x.rows(), F = x.cols();
  Tensor out = axis == 0 ? Tensor::zeros({F}) : Tensor::zeros({B, 1});
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < F; ++j) {
      if (axis == 0)
        out.at(j) += x.at(b, j);
      else
        out.at(b, 0) += x.at(b, j);
    }
  if (detail::tracking({&x})) {
    out.set_requires_grad();
    Tensor xi = x, oi = out;
    active_tape()->record(out, [xi, oi, axis, B, F]() mutable {
      auto& xg = xi.grad();
      for (int b = 0; b < B; ++b)
        for (int j = 0; j < F; ++j)
          xg[static_cast<std::size_t>(b) * F + j] +=
              axis == 0 ? oi.grad()[static_cast<std::size_t>(j)]
                        : oi.grad()[static_cast<std::size_t>(b)];
    });
  }
  return out;
}

inline Tensor mean_axis(const Tensor& x, int axis) {
  const double inv =
      1.0 / static_cast<double>(axis == 0 ? x.rows() : x.cols());
  return scale(sum_axis(x, axis), inv);
}

// ---------------------------------------------------------------------------
// Softmax (max-subtracted), along rows (axis 1) or columns (axis 0).

inline Tensor softmax(const Tensor& x, int axis = 1) {
  detail::check_finite(x, "softmax");
  detail::require(x.ndim() == 2, "softmax: operand must be 2-d");
  detail::require(axis == 0 || axis == 1, "softmax: axis must be 0 or 1");
  const int B = x.rows(), F = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  const int outer = axis == 1 ? B : F;
  const int inner = axis == 1 ? F : B;
  auto idx = [axis](int o, int i) {
    return axis == 1 ? std::pair{o, i} : std::pair{i, o};
  };
  for (int o = 0; o < outer; ++o) {
    double mx = -1e300;
    for (int i = 0; i < inner; ++i) {
      auto [r, c] = idx(o, i);
      mx = std::max(mx, x.at(r, c));
    }
    double denom = 0.0;
    for (int i = 0; i < inner; ++i) {
      auto [r, c] = idx(o, i);
      denom += std::exp(x.at(r, c) - mx);
    }
    for (int i = 0; i < inner; ++i) {
      auto [r, c] = idx(o, i);
      out.at(r, c) = std::exp(x.at(r, c) - mx) / denom;
    }
  }
  if (detail::tracking({&x})) {
    out.set_requires_grad();
    Tensor xi = x, oi = out;
    active_tape()->record(out, [xi, oi, axis, outer, inner, idx]() mutable {
      auto& xg = xi.grad();
      const int F2 = xi.cols();
      for (int o = 0; o < outer; ++o) {
        double dot = 0.0;
        for (int i = 0; i < inner; ++i) {
          auto [r, c] = idx(o, i);
          dot += oi.grad()[static_cast<std::size_t>(r) * F2 + c] * oi.at(r, c);
        }
        for (int i = 0; i < inner; ++i) {
          auto [r, c] = idx(o, i);
          const std::size_t k = static_cast<std::size_t>(r) * F2 + c;
          xg[k] += oi.at(r, c) * (oi.grad()[k] - dot);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch normalization over B x F inputs.
//
// Train mode normalizes with biased batch statistics and updates
//   running <- (1 - momentum) * running + momentum * batch
// where the running-variance update uses the unbiased estimate when B > 1
// (falls back to biased at B == 1). Eval mode normalizes with the running
// statistics and leaves them untouched. The normalization itself is composed
// from recorded primitives, so gradients flow through the batch statistics.

enum class Mode { train, eval };

inline Tensor batchnorm(const Tensor& x, const Tensor& gamma,
                        const Tensor& beta, Tensor& running_mean,
                        Tensor& running_var, Mode mode, double momentum = 0.1,
                        double eps = 1e-5) {
  detail::require(x.ndim() == 2, "batchnorm: input must be 2-d");
  const int B = x.rows(), F = x.cols();
  detail::require(gamma.numel() == static_cast<std::size_t>(F) &&
                      beta.numel() == static_cast<std::size_t>(F) &&
                      running_mean.numel() == static_cast<std::size_t>(F) &&
                      running_var.numel() == static_cast<std::size_t>(F),
                  "batchnorm: parameter length must equal feature count");
  Tensor norm;
  if (mode == Mode::train) {
    Tensor mu = mean_axis(x, 0);
    Tensor centered = sub_rowvec(x, mu);
    Tensor var = mean_axis(square(centered), 0);  // biased
    norm = div_rowvec(centered, sqrt(add_scalar(var, eps)));
    const double unbias = B > 1 ? static_cast<double>(B) / (B - 1) : 1.0;
    for (int j = 0; j < F; ++j) {
      running_mean.at(j) =
          (1.0 - momentum) * running_mean.at(j) + momentum * mu.at(j);
      running_var.at(j) = (1.0 - momentum) * running_var.at(j) +
                          momentum * unbias * var.at(j);
    }
  } else {
    Tensor denom = Tensor::zeros({F});
    for (int j = 0; j < F; ++j)
      denom.at(j) = std::sqrt(running_var.at(j) + eps);
    norm = div_rowvec(sub_rowvec(x, running_mean), denom);
  }
  return add_rowvec(mul_rowvec(norm, gamma), beta);
}

}  // namespace qclmix
