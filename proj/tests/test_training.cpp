#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "qclmix/datagen.hpp"
#include "qclmix/optimizer.hpp"
#include "qclmix/training.hpp"

using namespace qclmix;

namespace {

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig quick_config(int epochs = 10) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  cfg.model.hidden1 = 16;
  cfg.model.hidden2 = 8;
  cfg.model.proj_hidden = 6;
  cfg.model.emb_dim = 4;
  return cfg;
}

}  // namespace

TEST_CASE("adamw basic behavior") {
  Tensor w = Tensor::from({1}, {1.0});
  w.set_requires_grad();
  std::vector<ParamRef> refs = {{"w", &w, true}};
  AdamW opt(refs);

  SECTION("zero gradients, zero decay: parameters are untouched") {
    w.zero_grad();
    opt.step(0.1, 0.0);
    CHECK(w.at(0) == 1.0);
  }

  SECTION("first step magnitude is about lr") {
    // f(w) = w^2 at w = 1: gradient 2, first bias-corrected step is
    // lr * g / (|g| + eps) which is lr to within eps.
    w.grad()[0] = 2.0;
    opt.step(0.1, 0.0);
    CHECK(w.at(0) == Catch::Approx(0.9).margin(1e-6));
  }

  SECTION("decoupled decay scales by 1 - lr * wd") {
    w.zero_grad();
    opt.step(1.0, 0.1);
    CHECK(w.at(0) == Catch::Approx(0.9).margin(1e-12));
  }

  SECTION("non-finite gradient names the parameter") {
    w.grad()[0] = std::nan("");
    CHECK_THROWS_WITH(opt.step(0.1, 0.0),
                      Catch::Matchers::ContainsSubstring("'w'"));
  }
}

TEST_CASE("weight decay skips flagged parameters") {
  Tensor theta = Tensor::from({2}, {1.0, -1.0});
  Tensor gamma = Tensor::from({2}, {1.0, 1.0});
  Tensor dense = Tensor::from({2}, {1.0, -1.0});
  for (Tensor* t : {&theta, &gamma, &dense}) t->set_requires_grad();
  std::vector<ParamRef> refs = {{"theta", &theta, false},
                                {"bn.gamma", &gamma, false},
                                {"dense", &dense, true}};
  AdamW opt(refs);
  for (Tensor* t : {&theta, &gamma, &dense}) t->zero_grad();
  opt.step(1.0, 0.5);
  CHECK(theta.at(0) == 1.0);
  CHECK(gamma.at(0) == 1.0);
  CHECK(dense.at(0) == Catch::Approx(0.5));
}

TEST_CASE("one-cycle schedule endpoints") {
  OneCycleConfig sc;  // max 1e-2, warmup 0.3, div 25, final_div 1e4
  const long long total = 1001;  // peak lands exactly on step 300
  CHECK(one_cycle_lr(0, total, sc) == Catch::Approx(4e-4).epsilon(1e-12));
  CHECK(one_cycle_lr(300, total, sc) == Catch::Approx(1e-2).epsilon(1e-12));
  CHECK(one_cycle_lr(total - 1, total, sc) == Catch::Approx(1e-6).epsilon(1e-12));

  // Monotone rise to the peak, monotone fall after it.
  for (long long s = 1; s <= 300; ++s)
    CHECK(one_cycle_lr(s, total, sc) > one_cycle_lr(s - 1, total, sc));
  for (long long s = 301; s < total; ++s)
    CHECK(one_cycle_lr(s, total, sc) < one_cycle_lr(s - 1, total, sc));

  CHECK_THROWS_AS(one_cycle_lr(-1, total, sc), numeric_error);
  CHECK_THROWS_AS(one_cycle_lr(total, total, sc), numeric_error);
  CHECK(one_cycle_lr(0, 1, sc) == sc.max_lr);
}

TEST_CASE("training fits a separable toy set") {
  Dataset ds = make_separable_binary(200, 4, 5);
  // Training-accuracy probe: selection runs on the training points so the
  // retained checkpoint is the one that fits them best.
  Split split;
  for (int i = 0; i < ds.num_samples(); ++i) split.train_idx.push_back(i);
  split.test_idx = split.train_idx;
  TrainConfig cfg = quick_config(50);
  TrainResult result = train(ds, split, cfg);

  Tensor train_X = result.scaler.apply(take_rows(ds.X, split.train_idx));
  std::vector<int> train_y = take_labels(ds.y, split.train_idx);
  Metrics m =
      evaluate(result.best_params, result.model_config, train_X, train_y);
  CHECK(m.accuracy == 1.0);

  // Average hybrid loss must not diverge under the default schedule.
  const auto& hist = result.history.epochs;
  REQUIRE(hist.size() == 50);
  CHECK(hist.back().mean_loss.hybrid < hist.front().mean_loss.hybrid);
}

TEST_CASE("same seed gives byte-identical checkpoints") {
  Dataset ds = make_separable_binary(120, 3, 8);
  Split split = stratified_split(ds, 0.2, 42);
  TrainConfig cfg = quick_config(6);

  TrainResult a = train(ds, split, cfg);
  TrainResult b = train(ds, split, cfg);
  const std::string pa = "/tmp/qclmix_ckpt_a.ckpt";
  const std::string pb = "/tmp/qclmix_ckpt_b.ckpt";
  save_checkpoint(a.best_params, a.model_config, a.scaler, pa);
  save_checkpoint(b.best_params, b.model_config, b.scaler, pb);
  CHECK(file_bytes(pa) == file_bytes(pb));

  TrainConfig other = cfg;
  other.seed = 43;
  TrainResult c = train(ds, split, other);
  const std::string pc = "/tmp/qclmix_ckpt_c.ckpt";
  save_checkpoint(c.best_params, c.model_config, c.scaler, pc);
  CHECK(file_bytes(pa) != file_bytes(pc));
}

TEST_CASE("checkpoint round-trip") {
  Dataset ds = make_separable_binary(100, 3, 9);
  Split split = stratified_split(ds, 0.2, 1);
  TrainConfig cfg = quick_config(3);
  TrainResult result = train(ds, split, cfg);

  const std::string p1 = "/tmp/qclmix_rt1.ckpt";
  const std::string p2 = "/tmp/qclmix_rt2.ckpt";
  save_checkpoint(result.best_params, result.model_config, result.scaler, p1);
  Checkpoint ck = load_checkpoint(p1);
  save_checkpoint(ck.params, ck.config, ck.scaler, p2);
  CHECK(file_bytes(p1) == file_bytes(p2));

  // Loaded parameters score identically on the held-out slice.
  Tensor test_X = result.scaler.apply(take_rows(ds.X, split.test_idx));
  std::vector<int> test_y = take_labels(ds.y, split.test_idx);
  Metrics in_memory =
      evaluate(result.best_params, result.model_config, test_X, test_y);
  Metrics reloaded = evaluate(ck.params, ck.config,
                              ck.scaler.apply(take_rows(ds.X, split.test_idx)),
                              test_y);
  CHECK(in_memory.accuracy == reloaded.accuracy);
  CHECK(in_memory.maF1 == reloaded.maF1);
  CHECK(reloaded.maF1 == result.history.test_metrics.maF1);

  // Truncation is a structured failure, not a crash.
  const std::string bytes = file_bytes(p1);
  const std::string pt = "/tmp/qclmix_trunc.ckpt";
  {
    std::ofstream out(pt, std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(pt), data_error);
  CHECK_THROWS_AS(load_checkpoint("/tmp/qclmix_missing.ckpt"), data_error);
}

TEST_CASE("inert blocks leave the training trajectory unchanged") {
  // With both structural blocks ablated the network is a plain two-layer MLP;
  // scrambling the inert parameters must not move a single training step.
  Dataset ds = make_separable_binary(96, 3, 10);
  Split split = stratified_split(ds, 0.25, 3);
  TrainConfig cfg = quick_config(1);
  cfg.model.use_quantum = false;
  cfg.model.use_attention = false;
  cfg.model.input_dim = ds.num_features();
  cfg.model.num_classes = ds.num_classes();

  auto run_steps = [&](bool scramble) {
    Tensor fit_raw = take_rows(ds.X, split.train_idx);
    Scaler scaler = fit_scaler(fit_raw);
    Tensor X = scaler.apply(fit_raw);
    std::vector<int> y = take_labels(ds.y, split.train_idx);

    ModelParams params = init_params(cfg.model, 5);
    if (scramble) {
      for (Tensor* t : {&params.theta1, &params.theta2, &params.Wq, &params.Wk,
                        &params.Wv, &params.Wo, &params.bq, &params.bk,
                        &params.bv, &params.bo})
        for (double& v : t->data()) v = 2.0 * v + 0.31;
    }
    AdamW opt(params.learnable());
    std::vector<double> losses;
    for (int step = 0; step < 5; ++step) {
      std::vector<int> rows;
      for (int i = 0; i < 32; ++i) rows.push_back((step * 32 + i) % X.rows());
      Tensor bx = take_rows(X, rows);
      std::vector<int> by = take_labels(y, rows);
      Tape tape;
      TapeScope scope(tape);
      ForwardOutput out = model_forward(bx, params, cfg.model, Mode::train);
      HybridResult loss =
          hybrid_loss(out.logits, out.embedding, by, params.centroids, cfg.loss);
      opt.zero_grad();
      tape.backward(loss.total);
      opt.step(1e-3, 0.0);
      losses.push_back(loss.parts.hybrid);
    }
    return losses;
  };

  CHECK(run_steps(false) == run_steps(true));
}

TEST_CASE("validation carve-out changes the selection split only") {
  Dataset ds = make_separable_binary(200, 4, 12);
  Split split = stratified_split(ds, 0.2, 42);
  TrainConfig cfg = quick_config(4);
  cfg.val_fraction = 0.25;
  TrainResult result = train(ds, split, cfg);
  REQUIRE(result.history.epochs.size() == 4);
  // Selection metrics were computed on the carved validation share, while
  // test metrics come from the untouched held-out side.
  CHECK(result.history.best_epoch >= 0);
  CHECK(result.history.test_metrics.accuracy >= 0.0);
}

TEST_CASE("mixup can be disabled per run") {
  Dataset ds = make_separable_binary(80, 3, 13);
  Split split = stratified_split(ds, 0.2, 42);
  TrainConfig cfg = quick_config(2);
  cfg.model.use_mixup = false;
  TrainResult result = train(ds, split, cfg);
  CHECK(result.history.mixup_lambdas_epoch1.empty());

  TrainConfig with = quick_config(2);
  TrainResult r2 = train(ds, split, with);
  CHECK_FALSE(r2.history.mixup_lambdas_epoch1.empty());
  for (double lam : r2.history.mixup_lambdas_epoch1) {
    CHECK(lam >= 0.5);
    CHECK(lam <= 1.0);
  }
}
