#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qclmix/data.hpp"
#include "qclmix/losses.hpp"
#include "qclmix/metrics.hpp"
#include "qclmix/mixup.hpp"
#include "qclmix/model.hpp"
#include "qclmix/optimizer.hpp"

namespace qclmix {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double base_lr = 1e-3;       // AdamW initial rate (pre-schedule)
  double weight_decay = 1e-5;
  std::uint64_t seed = 42;
  double split_ratio = 0.2;
  double val_fraction = 0.0;   // carve a validation share out of train for selection
  std::string selection_metric = "maF1";
  OneCycleConfig schedule;
  LossConfig loss;
  MixupConfig mixup;
  ModelConfig model;

  void validate() const {
    detail::require(epochs >= 1, "TrainConfig: epochs must be >= 1");
    detail::require(batch_size >= 2, "TrainConfig: batch_size must be >= 2");
    detail::require(val_fraction >= 0.0 && val_fraction < 1.0,
                    "TrainConfig: val_fraction must lie in [0, 1)");
  }
};

struct EpochRecord {
  LossBreakdown mean_loss;
  Metrics selection_eval;  // metrics on the selection split
  double last_lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  Metrics best_metrics;
  Metrics test_metrics;  // held-out metrics of the retained checkpoint
  std::vector<double> mixup_lambdas_epoch1;  // diagnostic: first-epoch draws
};

namespace detail {

inline double metric_value(const Metrics& m, const std::string& name) {
  if (name == "accuracy") return m.accuracy;
  if (name == "maP") return m.maP;
  if (name == "maR") return m.maR;
  require(name == "maF1", "unknown selection metric '" + name + "'");
  return m.maF1;
}

}  // namespace detail

// Deterministic eval-mode predictions; argmax ties resolve to the lower index.
inline std::vector<int> predict(ModelParams& params, const ModelConfig& cfg,
                                const Tensor& X, int chunk = 512) {
  std::vector<int> preds;
  preds.reserve(static_cast<std::size_t>(X.rows()));
  for (int start = 0; start < X.rows(); start += chunk) {
    const int n = std::min(chunk, X.rows() - start);
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = start + i;
    Tensor batch = take_rows(X, rows);
    ForwardOutput out = model_forward(batch, params, cfg, Mode::eval);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      for (int c = 1; c < out.logits.cols(); ++c)
        if (out.logits.at(i, c) > out.logits.at(i, best)) best = c;
      preds.push_back(best);
    }
  }
  return preds;
}

inline Metrics evaluate(ModelParams& params, const ModelConfig& cfg,
                        const Tensor& X, const std::vector<int>& y) {
  const std::vector<int> preds = predict(params, cfg, X);
  return macro_metrics(confusion_matrix(y, preds, cfg.num_classes));
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Plain-text format:
//   line 1:            QCLMIX-CKPT v1
//   per array:         name ndim d1 [d2 ...]
//                      row-major values, space separated, %.17g
//   last line:         END
// 17 significant digits round-trip binary64 exactly, so save -> load -> save
// is byte-identical. Besides the model arrays, the file carries the fitted
// feature scaler and the forward-pass configuration as pseudo-arrays
// (scaler.*, config.*) so a checkpoint is self-contained for evaluation.

namespace detail {

inline void write_array(std::ofstream& out, const std::string& name,
                        const std::vector<int>& shape,
                        const std::vector<double>& values) {
  out << name << ' ' << shape.size();
  for (int d : shape) out << ' ' << d;
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", values[i]);
    if (i) out << ' ';
    out << buf;
  }
  out << '\n';
}

}  // namespace detail

struct Checkpoint {
  ModelParams params;
  ModelConfig config;
  Scaler scaler;
};

inline void save_checkpoint(ModelParams& params, const ModelConfig& cfg,
                            const Scaler& scaler, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: exact newline control
  detail::require_data(out.good(), "save_checkpoint: cannot open '" + path + "'");
  out << "QCLMIX-CKPT v1\n";
  for (auto ref : params.all_arrays())
    detail::write_array(out, ref.name, ref.tensor->shape(), ref.tensor->data());
  detail::write_array(out, "scaler.mean", {static_cast<int>(scaler.mean.size())},
                      scaler.mean);
  detail::write_array(out, "scaler.std", {static_cast<int>(scaler.std.size())},
                      scaler.std);
  detail::write_array(out, "config.use_quantum", {1},
                      {cfg.use_quantum ? 1.0 : 0.0});
  detail::write_array(out, "config.use_attention", {1},
                      {cfg.use_attention ? 1.0 : 0.0});
  detail::write_array(out, "config.leaky_slope", {1}, {cfg.leaky_slope});
  detail::write_array(out, "config.bn_eps", {1}, {cfg.bn_eps});
  detail::write_array(out, "config.bn_momentum", {1}, {cfg.bn_momentum});
  out << "END\n";
  detail::require_data(out.good(), "save_checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  detail::require_data(in.good(), "load_checkpoint: cannot open '" + path + "'");
  std::string line;
  detail::require_data(static_cast<bool>(std::getline(in, line)) &&
                           line == "QCLMIX-CKPT v1",
                       "load_checkpoint: bad header or version in '" + path + "'");

  struct RawArray {
    std::vector<int> shape;
    std::vector<double> values;
  };
  std::map<std::string, RawArray> arrays;
  bool saw_end = false;
  while (std::getline(in, line)) {
    if (line == "END") {
      saw_end = true;
      break;
    }
    std::istringstream hdr(line);
    std::string name;
    int ndim = -1;
    detail::require_data(static_cast<bool>(hdr >> name >> ndim) && ndim >= 1 &&
                             ndim <= 2,
                         "load_checkpoint: malformed array header '" + line + "'");
    RawArray arr;
    std::size_t count = 1;
    for (int i = 0; i < ndim; ++i) {
      int d = 0;
      detail::require_data(static_cast<bool>(hdr >> d) && d > 0,
                           "load_checkpoint: bad dimensions for '" + name + "'");
      arr.shape.push_back(d);
      count *= static_cast<std::size_t>(d);
    }
    detail::require_data(static_cast<bool>(std::getline(in, line)),
                         "load_checkpoint: truncated values for '" + name + "'");
    std::istringstream vals(line);
    arr.values.reserve(count);
    double v;
    while (vals >> v) arr.values.push_back(v);
    detail::require_data(arr.values.size() == count,
                         "load_checkpoint: value count mismatch for '" + name +
                             "' (got " + std::to_string(arr.values.size()) +
                             ", want " + std::to_string(count) + ")");
    arrays.emplace(std::move(name), std::move(arr));
  }
  detail::require_data(saw_end, "load_checkpoint: missing END marker (truncated file?)");

  auto take = [&](const std::string& name) {
    auto it = arrays.find(name);
    detail::require_data(it != arrays.end(),
                         "load_checkpoint: missing array '" + name + "'");
    Tensor t = Tensor::from(it->second.shape, it->second.values);
    return t;
  };
  auto take_scalar = [&](const std::string& name) {
    Tensor t = take(name);
    detail::require_data(t.numel() == 1,
                         "load_checkpoint: '" + name + "' must be scalar");
    return t.at(0);
  };

  Checkpoint ck;
  ck.config.use_quantum = take_scalar("config.use_quantum") != 0.0;
  ck.config.use_attention = take_scalar("config.use_attention") != 0.0;
  ck.config.leaky_slope = take_scalar("config.leaky_slope");
  ck.config.bn_eps = take_scalar("config.bn_eps");
  ck.config.bn_momentum = take_scalar("config.bn_momentum");

  for (auto ref : ck.params.all_arrays()) *ref.tensor = take(ref.name);
  for (auto ref : ck.params.learnable()) ref.tensor->set_requires_grad();

  Tensor mean = take("scaler.mean"), stdev = take("scaler.std");
  ck.scaler.mean = mean.data();
  ck.scaler.std = stdev.data();

  ck.config.input_dim = ck.params.theta1.cols();
  ck.config.hidden1 = ck.params.fc1_w.cols();
  ck.config.hidden2 = ck.params.fc2_w.cols();
  ck.config.proj_hidden = ck.params.proj1_w.cols();
  ck.config.emb_dim = ck.params.proj2_w.cols();
  ck.config.num_classes = ck.params.fc3_w.cols();

  detail::require_data(ck.params.fc1_w.rows() == ck.config.input_dim &&
                           ck.params.centroids.cols() == ck.config.emb_dim &&
                           ck.params.centroids.rows() == ck.config.num_classes,
                       "load_checkpoint: inconsistent array shapes");
  return ck;
}

// ---------------------------------------------------------------------------
// Training

// Carve a stratified validation share out of the training indices.
// Deterministic in the config seed.
inline void carve_validation(const Dataset& ds, const std::vector<int>& train_idx,
                             double val_fraction, std::uint64_t seed,
                             std::vector<int>& fit_idx, std::vector<int>& val_idx) {
  fit_idx.clear();
  val_idx.clear();
  std::map<int, std::vector<int>> by_class;
  for (int i : train_idx) by_class[ds.y[static_cast<std::size_t>(i)]].push_back(i);
  Rng rng = Rng(seed).fork(0x76616cULL);  // validation stream
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 2) {
      for (int i : idx) fit_idx.push_back(i);
      continue;
    }
    rng.shuffle(idx);
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<double>(idx.size())));
    n_val = std::min(n_val, idx.size() - 1);
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < n_val ? val_idx : fit_idx).push_back(idx[i]);
  }
  std::sort(fit_idx.begin(), fit_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
}

struct TrainResult {
  ModelParams best_params;
  TrainHistory history;
  Scaler scaler;
  ModelConfig model_config;  // with dims filled in
};

// Full optimization loop: standardize on the training side of the split,
// then per epoch shuffle, mix, forward once, apply the hybrid loss against
// the original labels, and step AdamW under the one-cycle schedule. The
// checkpoint with the best selection metric is retained. By default the
// selection split is the held-out test side; set val_fraction > 0 to select
// on a validation share carved from train instead.
inline TrainResult train(const Dataset& ds, const Split& split,
                         TrainConfig cfg) {
  cfg.validate();
  cfg.model.input_dim = ds.num_features();
  cfg.model.num_classes = ds.num_classes();
  cfg.model.validate();
  cfg.loss.validate();

  std::vector<int> fit_idx = split.train_idx, sel_idx = split.test_idx;
  const bool select_on_val = cfg.val_fraction > 0.0;
  if (select_on_val)
    carve_validation(ds, split.train_idx, cfg.val_fraction, cfg.seed, fit_idx,
                     sel_idx);

  Tensor raw_fit = take_rows(ds.X, fit_idx);
  Tensor raw_sel = take_rows(ds.X, sel_idx);
  Tensor raw_test = take_rows(ds.X, split.test_idx);
  Scaler scaler = fit_scaler(raw_fit);
  Tensor fit_X = scaler.apply(raw_fit);
  Tensor sel_X = scaler.apply(raw_sel);
  Tensor test_X = scaler.apply(raw_test);
  std::vector<int> fit_y = take_labels(ds.y, fit_idx);
  std::vector<int> sel_y = take_labels(ds.y, sel_idx);
  std::vector<int> test_y = take_labels(ds.y, split.test_idx);

  const int n = fit_X.rows();
  detail::require(n >= 2, "train: need at least two training samples");

  ModelParams params = init_params(cfg.model, cfg.seed);
  AdamW opt(params.learnable());
  Rng loop_rng = Rng(cfg.seed).fork(0x747261696eULL);  // train-loop stream

  const long long batches_per_epoch =
      (n + cfg.batch_size - 1) / cfg.batch_size;
  const long long planned_steps =
      static_cast<long long>(cfg.epochs) * batches_per_epoch;

  TrainResult result;
  result.scaler = scaler;
  result.model_config = cfg.model;
  double best_score = -1.0;
  long long global_step = 0;

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    loop_rng.shuffle(order);
    LossBreakdown accum;
    int batches_done = 0;
    double last_lr = 0.0;

    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, n - start);
      std::vector<int> batch_rows(order.begin() + start,
                                  order.begin() + start + bsz);
      // A short final batch is kept only if some class appears twice;
      // lone-sample batches starve the pairwise loss terms.
      if (bsz < cfg.batch_size) {
        std::map<int, int> counts;
        bool ok = false;
        for (int r : batch_rows)
          if (++counts[fit_y[static_cast<std::size_t>(r)]] >= 2) ok = true;
        if (bsz < 2 || !ok) continue;
      }

      Tensor bx = take_rows(fit_X, batch_rows);
      std::vector<int> by = take_labels(fit_y, batch_rows);

      MixupConfig mix_cfg = cfg.mixup;
      mix_cfg.enabled = cfg.mixup.enabled && cfg.model.use_mixup;
      if (mix_cfg.enabled) mix_cfg.k_neighbors = std::min(mix_cfg.k_neighbors, bsz - 1);
      MixedBatch mixed = mixup_batch(bx, by, cfg.model.num_classes, mix_cfg,
                                     loop_rng);
      if (epoch == 0 && mix_cfg.enabled)
        result.history.mixup_lambdas_epoch1.insert(
            result.history.mixup_lambdas_epoch1.end(), mixed.lambdas.begin(),
            mixed.lambdas.end());

      Tape tape;
      TapeScope scope(tape);
      ForwardOutput out = model_forward(mixed.x_mix, params, cfg.model,
                                        Mode::train);
      HybridResult loss = hybrid_loss(out.logits, out.embedding, by,
                                      params.centroids, cfg.loss);
      if (!std::isfinite(loss.parts.hybrid))
        throw numeric_error("train: non-finite loss at epoch " +
                            std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batches_done + 1));

      opt.zero_grad();
      tape.backward(loss.total);
      last_lr = one_cycle_lr(global_step, planned_steps, cfg.schedule);
      opt.step(last_lr, cfg.weight_decay);
      ++global_step;

      accum.focal += loss.parts.focal;
      accum.intra += loss.parts.intra;
      accum.inter += loss.parts.inter;
      accum.fvl += loss.parts.fvl;
      accum.supcon += loss.parts.supcon;
      accum.triplet += loss.parts.triplet;
      accum.hybrid += loss.parts.hybrid;
      ++batches_done;
    }
    detail::require(batches_done > 0, "train: no usable batches in epoch");

    EpochRecord rec;
    rec.mean_loss = accum;
    rec.mean_loss.focal /= batches_done;
    rec.mean_loss.intra /= batches_done;
    rec.mean_loss.inter /= batches_done;
    rec.mean_loss.fvl /= batches_done;
    rec.mean_loss.supcon /= batches_done;
    rec.mean_loss.triplet /= batches_done;
    rec.mean_loss.hybrid /= batches_done;
    rec.last_lr = last_lr;
    rec.selection_eval = evaluate(params, cfg.model, sel_X, sel_y);
    result.history.epochs.push_back(rec);

    const double score =
        detail::metric_value(rec.selection_eval, cfg.selection_metric);
    if (score > best_score) {
      best_score = score;
      result.history.best_epoch = epoch;
      result.history.best_metrics = rec.selection_eval;
      result.best_params = params.clone();
    }
  }

  result.history.test_metrics =
      evaluate(result.best_params, cfg.model, test_X, test_y);
  return result;
}

}  // namespace qclmix
