// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Runs end-to-end in minutes on a laptop.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qclmix/qclmix.hpp"

using namespace qclmix;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool ok,
            const std::string& detail) {
  std::printf("[%s] %2d %-28s %s\n", ok ? "PASS" : "FAIL", number, name.c_str(),
              detail.c_str());
  if (!ok) ++g_failures;
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1. Finite-difference checks: every op, every loss, the full model.
void criterion_gradients() {
  const double t0 = now_seconds();
  auto reports = run_grad_suite(42, 20);
  double worst = 0.0;
  std::string worst_name = "-";
  bool ok = !reports.empty();
  for (const auto& r : reports) {
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_name = r.name;
    }
    ok = ok && r.passed();
  }
  const double elapsed = now_seconds() - t0;
  ok = ok && elapsed < 60.0;
  std::ostringstream detail;
  detail << reports.size() << " checks x 20 instances, worst " << worst
         << " (" << worst_name << "), " << elapsed << "s";
  report(1, "gradient suite", ok, detail.str());
}

// 2. Zero-angle feature rotation halves the input exactly.
void criterion_qe_half() {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int B = 1 + static_cast<int>(rng.bounded(6));
    const int d = 1 + static_cast<int>(rng.bounded(12));
    Tensor x = Tensor::zeros({B, d});
    for (double& v : x.data()) v = rng.uniform(-10, 10);
    Tensor out = qe_forward(x, Tensor::zeros({d}));
    for (std::size_t i = 0; i < x.data().size(); ++i)
      worst = std::max(worst,
                       std::fabs(out.data()[i] - 0.5 * x.data()[i]));
  }
  std::ostringstream detail;
  detail << "max |qe(x) - x/2| = " << worst;
  report(2, "zero-angle halving", worst <= 1e-15, detail.str());
}

// 3. Length-1 attention block reduces to a residual affine map.
void criterion_attention_affine() {
  double worst = 0.0;
  Rng rng(4242);
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig mc;
    mc.input_dim = 3 + static_cast<int>(rng.bounded(8));
    mc.num_classes = 2;
    ModelParams p = init_params(mc, rng.next_u64());
    Tensor x = Tensor::zeros({4, mc.input_dim});
    for (double& v : x.data()) v = rng.uniform(-3, 3);
    Tensor out = attention_forward(x, p);
    Tensor want = add_rowvec(matmul(add_rowvec(matmul(x, p.Wv), p.bv), p.Wo),
                             p.bo);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < mc.input_dim; ++j)
        worst = std::max(
            worst, std::fabs(out.at(i, j) - x.at(i, j) - want.at(i, j)));
  }
  std::ostringstream detail;
  detail << "max |(block(x) - x) - (xWv+bv)Wo - bo| = " << worst;
  report(3, "attention singleton", worst <= 1e-12, detail.str());
}

// 4. Mixup: bounded coefficients, exact replay, verified neighbors.
void criterion_mixup_oracle() {
  Rng rng(777);
  long long violations = 0;
  for (int batch_id = 0; batch_id < 1000; ++batch_id) {
    const int B = 12 + static_cast<int>(rng.bounded(24));
    const int D = 2 + static_cast<int>(rng.bounded(8));
    Tensor x = Tensor::zeros({B, D});
    for (double& v : x.data()) v = rng.uniform(-4, 4);
    std::vector<int> y;
    for (int i = 0; i < B; ++i) y.push_back(static_cast<int>(rng.bounded(3)));
    MixupConfig cfg;
    MixedBatch mb = mixup_batch(x, y, 3, cfg, rng);

    for (int i = 0; i < B; ++i) {
      const double lam = mb.lambdas[static_cast<std::size_t>(i)];
      if (lam < 0.5 || lam > 1.0) ++violations;
      const int j = mb.neighbor[static_cast<std::size_t>(i)];

      // Exhaustive neighbor verification.
      double dj = 0.0;
      std::vector<std::pair<double, int>> dists;
      for (int q = 0; q < B; ++q) {
        if (q == i) continue;
        double d2 = 0.0;
        for (int f = 0; f < D; ++f) {
          const double d = x.at(i, f) - x.at(q, f);
          d2 += d * d;
        }
        dists.push_back({d2, q});
        if (q == j) dj = d2;
      }
      std::sort(dists.begin(), dists.end());
      bool in_set = false;
      for (int q = 0; q < cfg.k_neighbors; ++q)
        if (dists[static_cast<std::size_t>(q)].second == j) in_set = true;
      // Accept equal-distance boundary picks as members of the set.
      if (!in_set &&
          dj > dists[static_cast<std::size_t>(cfg.k_neighbors - 1)].first)
        ++violations;

      for (int f = 0; f < D; ++f) {
        const double want = lam * x.at(i, f) + (1.0 - lam) * x.at(j, f);
        if (mb.x_mix.at(i, f) != want) ++violations;
      }
    }
  }
  std::ostringstream detail;
  detail << violations << " violation(s) over 1000 batches";
  report(4, "mixup oracle", violations == 0, detail.str());
}

// 5. Contrastive loss equals the direct double-loop evaluation.
void criterion_supcon_oracle() {
  Rng rng(555);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int B = 16;
    const int C = trial % 2 == 0 ? 2 : 5;
    Tensor emb = Tensor::zeros({B, 8});
    for (double& v : emb.data()) v = rng.uniform(-2, 2);
    std::vector<int> y;
    for (int i = 0; i < B; ++i) y.push_back(static_cast<int>(rng.bounded(C)));
    if (trial % 5 == 0) {
      // Force a positive-less anchor: label C-1 appears exactly once.
      for (int& v : y)
        if (v == C - 1) v = 0;
      y[0] = C - 1;
    }

    const double got = supcon_loss(emb, y, 0.2).value_scalar();

    // Reference: straight sum over anchors and positives.
    double want = 0.0;
    int anchors = 0;
    std::vector<std::vector<double>> unit(B, std::vector<double>(8));
    for (int i = 0; i < B; ++i) {
      double n = 0.0;
      for (int j = 0; j < 8; ++j) n += emb.at(i, j) * emb.at(i, j);
      n = std::max(std::sqrt(n), 1e-12);
      for (int j = 0; j < 8; ++j)
        unit[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = emb.at(i, j) / n;
    }
    for (int i = 0; i < B; ++i) {
      std::vector<int> pos;
      for (int j = 0; j < B; ++j)
        if (j != i && y[static_cast<std::size_t>(j)] == y[static_cast<std::size_t>(i)])
          pos.push_back(j);
      if (pos.empty()) continue;
      ++anchors;
      double denom = 0.0;
      for (int a = 0; a < B; ++a) {
        if (a == i) continue;
        double s = 0.0;
        for (int f = 0; f < 8; ++f)
          s += unit[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)] *
               unit[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
        denom += std::exp(s / 0.2);
      }
      double inner = 0.0;
      for (int p : pos) {
        double s = 0.0;
        for (int f = 0; f < 8; ++f)
          s += unit[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)] *
               unit[static_cast<std::size_t>(p)][static_cast<std::size_t>(f)];
        inner += s / 0.2 - std::log(denom);
      }
      want += -inner / static_cast<double>(pos.size());
    }
    want = anchors > 0 ? want / anchors : 0.0;
    worst = std::max(worst, std::fabs(got - want));
  }
  std::ostringstream detail;
  detail << "max |vectorized - double loop| = " << worst;
  report(5, "supcon oracle", worst < 1e-10, detail.str());
}

// 6. Rank-statistics replication on the published 21-model comparison.
void criterion_friedman() {
  // Per-metric average ranks of the 21 models (accuracy, maR, maP, maF1).
  const std::vector<std::vector<double>> metric_ranks = {
      {9.9, 14, 8.2, 11.6, 10.4, 15.6, 7.1, 9.6, 15.5, 6.9, 9,
       10.8, 12.2, 10, 7.4, 15.9, 9.1, 14.8, 13.9, 14.1, 3.8},
      {11.7, 8.4, 2.8, 10.9, 10.9, 16, 7.9, 9.2, 17.5, 5.9, 10.3,
       10.4, 13.6, 10.9, 9.7, 16.7, 10.6, 14.2, 14.9, 14.9, 3.6},
      {12.7, 10.1, 3.6, 11.2, 10.6, 16.8, 6.5, 8.5, 17.4, 5.1, 8.5,
       10.1, 12.8, 10.4, 9.1, 15.9, 12.1, 14.5, 15.5, 15.9, 3.6},
      {11.5, 10, 2.8, 11.1, 10.6, 16, 7.2, 8.6, 17.8, 4.9, 10.3,
       10.4, 13.7, 11, 8.8, 17.5, 11.2, 14.8, 14.6, 14.8, 3.2}};

  FriedmanResult fr = friedman_on_mean_ranks(metric_ranks);
  const double fcrit = f_critical(0.05, fr.df1, fr.df2);
  const double p_tail = chi2_sf(99.42, 20);

  const bool chi2_ok = std::fabs(fr.chi2 - 29.68) <= 0.01;
  const bool ff_ok = std::fabs(fr.F_F - 1.77) <= 0.01;
  const bool df_ok = fr.df1 == 20 && fr.df2 == 60;
  const bool crit_ok = std::fabs(fcrit - 1.748) <= 0.001;
  const bool reject_ok = fr.F_F > fcrit;
  const bool p_ok = p_tail >= 1.0e-12 && p_tail <= 2.5e-12;
  const bool ok = chi2_ok && ff_ok && df_ok && crit_ok && reject_ok && p_ok;

  std::ostringstream detail;
  detail << "chi2 " << fr.chi2 << " (want 29.68+-0.01 -> "
         << (chi2_ok ? "ok" : "FAIL") << "), F_F " << fr.F_F
         << " (want 1.77+-0.01 -> " << (ff_ok ? "ok" : "FAIL") << "), df ("
         << fr.df1 << "," << fr.df2 << "), crit " << fcrit << ", F_F>crit "
         << (reject_ok ? "Reject" : "no") << ", sf(99.42,20) " << p_tail;
  report(6, "rank-test replication", ok, detail.str());
}

// 7. Always-majority metrics on the bundled imbalanced 4177-row set.
void criterion_degenerate_metrics() {
  Dataset ds = make_abalone_like();
  Split split = stratified_split(ds, 0.2, 42);
  std::vector<int> y_true = take_labels(ds.y, split.test_idx);

  // majority class = most frequent in train
  std::vector<int> y_train = take_labels(ds.y, split.train_idx);
  std::vector<int> counts(2, 0);
  for (int v : y_train) ++counts[static_cast<std::size_t>(v)];
  const int majority = counts[0] >= counts[1] ? 0 : 1;
  std::vector<int> y_pred(y_true.size(), majority);

  Metrics m = macro_metrics(confusion_matrix(y_true, y_pred, 2));
  const bool ok = std::fabs(m.accuracy - 0.91) <= 0.005 &&
                  std::fabs(m.maP - 0.45) <= 0.01 &&
                  std::fabs(m.maR - 0.50) <= 1e-9 &&
                  std::fabs(m.maF1 - 0.48) <= 0.01;
  std::ostringstream detail;
  detail << "accuracy " << m.accuracy << ", maP " << m.maP << ", maR " << m.maR
         << ", maF1 " << m.maF1;
  report(7, "always-majority metrics", ok, detail.str());
}

Metrics run_variant(const Dataset& ds, const std::string& variant,
                    std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  if (variant == "no-quantum") cfg.model.use_quantum = false;
  if (variant == "no-attention") cfg.model.use_attention = false;
  if (variant == "no-mixup") cfg.model.use_mixup = false;
  Split split = stratified_split(ds, 0.2, seed);
  TrainResult result = train(ds, split, cfg);
  return result.history.test_metrics;
}

// 8. Full model beats the structural ablations on the 336-row set.
void criterion_directional_ablation() {
  const double t0 = now_seconds();
  Dataset ds = make_ecoli_like();
  const std::vector<std::uint64_t> seeds = {42, 43, 44};
  double full = 0.0, no_quantum = 0.0, no_attention = 0.0;
  for (auto s : seeds) {
    full += run_variant(ds, "full", s).maF1;
    no_quantum += run_variant(ds, "no-quantum", s).maF1;
    no_attention += run_variant(ds, "no-attention", s).maF1;
  }
  full /= seeds.size();
  no_quantum /= seeds.size();
  no_attention /= seeds.size();
  const double elapsed = now_seconds() - t0;
  const bool ok = full - no_quantum >= 0.10 && full - no_attention >= 0.10 &&
                  elapsed < 180.0;
  std::ostringstream detail;
  detail << "maF1 full " << full << ", no-quantum " << no_quantum
         << ", no-attention " << no_attention << " (gaps "
         << full - no_quantum << ", " << full - no_attention << "), "
         << elapsed << "s";
  report(8, "directional ablation", ok, detail.str());
}

// 9. Absolute score band on the separable 2000-row set.
void criterion_absolute_band() {
  const double t0 = now_seconds();
  Dataset ds = make_pendigits_like();
  Metrics m = run_variant(ds, "full", 42);
  const double elapsed = now_seconds() - t0;
  const bool ok = m.maF1 >= 0.95 && elapsed < 180.0;
  std::ostringstream detail;
  detail << "maF1 " << m.maF1 << ", " << elapsed << "s";
  report(9, "separable-set score band", ok, detail.str());
}

// 10. Byte-level determinism of training and checkpoint round-trips.
void criterion_determinism() {
  Dataset ds = make_ecoli_like();
  Split split = stratified_split(ds, 0.2, 42);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.seed = 42;

  TrainResult a = train(ds, split, cfg);
  TrainResult b = train(ds, split, cfg);
  const std::string pa = "/tmp/qclmix_acc_a.ckpt";
  const std::string pb = "/tmp/qclmix_acc_b.ckpt";
  save_checkpoint(a.best_params, a.model_config, a.scaler, pa);
  save_checkpoint(b.best_params, b.model_config, b.scaler, pb);
  const bool identical = file_bytes(pa) == file_bytes(pb);

  Checkpoint ck = load_checkpoint(pa);
  const std::string pc = "/tmp/qclmix_acc_c.ckpt";
  save_checkpoint(ck.params, ck.config, ck.scaler, pc);
  const bool round_trip = file_bytes(pa) == file_bytes(pc);

  std::ostringstream detail;
  detail << "repeat-run identical: " << (identical ? "yes" : "NO")
         << ", save-load-save identical: " << (round_trip ? "yes" : "NO");
  report(10, "determinism", identical && round_trip, detail.str());
}

}  // namespace

int main() {
  const double t0 = now_seconds();
  criterion_gradients();
  criterion_qe_half();
  criterion_attention_affine();
  criterion_mixup_oracle();
  criterion_supcon_oracle();
  criterion_friedman();
  criterion_degenerate_metrics();
  criterion_directional_ablation();
  criterion_absolute_band();
  criterion_determinism();
  std::printf("acceptance: %d failure(s), total %.1fs\n", g_failures,
              now_seconds() - t0);
  return g_failures == 0 ? 0 : 1;
}
