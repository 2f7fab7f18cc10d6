// Command-line interface: train / evaluate / bench / stats / gradcheck /
// export-embeddings over CSV datasets.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "qclmix/qclmix.hpp"

namespace fs = std::filesystem;
using namespace qclmix;

namespace {

struct Options {
  std::string data;
  std::string manifest;
  std::string config_file;
  std::string checkpoint;
  std::string results;
  std::string out_dir = "out";
  std::string ablate;
  std::string label_column = "last";
  std::string eval_split = "test";
  std::string op_filter;
  std::string variants = "full,no-quantum,no-mixup,no-attention";
  std::string seeds;
  std::uint64_t seed = 42;
  double val_fraction = 0.0;
  double split_ratio = 0.2;
  int jobs = 1;
  int gradcheck_instances = 20;
  bool rerank_global = false;
  TrainConfig train;
};

// Flat `key = value` config file; '#' starts a comment.
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw data_error("cannot open config file '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (!detail::trim(line).empty())
        throw data_error("config line " + std::to_string(line_no) +
                         ": expected key = value");
      continue;
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw data_error("config line " + std::to_string(line_no) +
                                      ": empty key");
    kv[key] = value;
  }
  return kv;
}

double to_double(const std::string& key, const std::string& v) {
  double out;
  if (!detail::parse_double(v, out))
    throw data_error("config key '" + key + "': bad numeric value '" + v + "'");
  return out;
}

void apply_config_entry(Options& o, const std::string& key,
                        const std::string& value) {
  TrainConfig& t = o.train;
  if (key == "seed") o.seed = static_cast<std::uint64_t>(to_double(key, value));
  else if (key == "epochs") t.epochs = static_cast<int>(to_double(key, value));
  else if (key == "batch_size") t.batch_size = static_cast<int>(to_double(key, value));
  else if (key == "base_lr") t.base_lr = to_double(key, value);
  else if (key == "weight_decay") t.weight_decay = to_double(key, value);
  else if (key == "max_lr") t.schedule.max_lr = to_double(key, value);
  else if (key == "warmup_fraction") t.schedule.warmup_fraction = to_double(key, value);
  else if (key == "div_factor") t.schedule.div_factor = to_double(key, value);
  else if (key == "final_div") t.schedule.final_div = to_double(key, value);
  else if (key == "gamma") t.loss.gamma = to_double(key, value);
  else if (key == "beta1") t.loss.beta1 = to_double(key, value);
  else if (key == "tau") t.loss.tau = to_double(key, value);
  else if (key == "margin") t.loss.margin = to_double(key, value);
  else if (key == "alpha_loss") t.loss.alpha_loss = to_double(key, value);
  else if (key == "miner_epsilon") t.loss.miner_epsilon = to_double(key, value);
  else if (key == "mixup_alpha") t.mixup.alpha_beta = to_double(key, value);
  else if (key == "k_neighbors") t.mixup.k_neighbors = static_cast<int>(to_double(key, value));
  else if (key == "hidden1") t.model.hidden1 = static_cast<int>(to_double(key, value));
  else if (key == "hidden2") t.model.hidden2 = static_cast<int>(to_double(key, value));
  else if (key == "proj_hidden") t.model.proj_hidden = static_cast<int>(to_double(key, value));
  else if (key == "emb_dim") t.model.emb_dim = static_cast<int>(to_double(key, value));
  else if (key == "leaky_slope") t.model.leaky_slope = to_double(key, value);
  else if (key == "bn_eps") t.model.bn_eps = to_double(key, value);
  else if (key == "bn_momentum") t.model.bn_momentum = to_double(key, value);
  else if (key == "split_ratio") o.split_ratio = to_double(key, value);
  else if (key == "val_fraction") o.val_fraction = to_double(key, value);
  else if (key == "label_column") o.label_column = value;
  else if (key == "selection_metric") t.selection_metric = value;
  else throw data_error("unknown config key '" + key + "'");
}

void apply_ablation(TrainConfig& cfg, const std::string& name) {
  if (name.empty() || name == "full") return;
  if (name == "no-quantum") cfg.model.use_quantum = false;
  else if (name == "no-mixup") cfg.model.use_mixup = false;
  else if (name == "no-attention") cfg.model.use_attention = false;
  else
    throw data_error("unknown ablation '" + name +
                     "'; valid: no-quantum, no-mixup, no-attention");
}

std::string variant_name(const TrainConfig& cfg) {
  if (!cfg.model.use_quantum) return "no-quantum";
  if (!cfg.model.use_mixup) return "no-mixup";
  if (!cfg.model.use_attention) return "no-attention";
  return "full";
}

void echo_config(const Options& o, const std::string& command) {
  const TrainConfig& t = o.train;
  std::cout << "# resolved configuration (" << command << ")\n"
            << "seed = " << o.seed << "\n"
            << "epochs = " << t.epochs << "\n"
            << "batch_size = " << t.batch_size << "\n"
            << "base_lr = " << t.base_lr << "\n"
            << "weight_decay = " << t.weight_decay << "\n"
            << "max_lr = " << t.schedule.max_lr << "\n"
            << "warmup_fraction = " << t.schedule.warmup_fraction << "\n"
            << "div_factor = " << t.schedule.div_factor << "\n"
            << "final_div = " << t.schedule.final_div << "\n"
            << "gamma = " << t.loss.gamma << "\n"
            << "beta1 = " << t.loss.beta1 << "\n"
            << "tau = " << t.loss.tau << "\n"
            << "margin = " << t.loss.margin << "\n"
            << "alpha_loss = " << t.loss.alpha_loss << "\n"
            << "miner_epsilon = " << t.loss.miner_epsilon << "\n"
            << "mixup_alpha = " << t.mixup.alpha_beta << "\n"
            << "k_neighbors = " << t.mixup.k_neighbors << "\n"
            << "hidden1 = " << t.model.hidden1 << "\n"
            << "hidden2 = " << t.model.hidden2 << "\n"
            << "proj_hidden = " << t.model.proj_hidden << "\n"
            << "emb_dim = " << t.model.emb_dim << "\n"
            << "leaky_slope = " << t.model.leaky_slope << "\n"
            << "bn_eps = " << t.model.bn_eps << "\n"
            << "bn_momentum = " << t.model.bn_momentum << "\n"
            << "split_ratio = " << o.split_ratio << "\n"
            << "val_fraction = " << o.val_fraction << "\n"
            << "label_column = " << o.label_column << "\n"
            << "selection_metric = " << t.selection_metric << "\n"
            << "variant = " << variant_name(t) << "\n"
            << "out = " << o.out_dir << "\n";
}

std::string dataset_stem(const std::string& path) {
  return fs::path(path).stem().string();
}

struct RunOutcome {
  std::string dataset;
  std::string variant;
  std::uint64_t seed = 0;
  Metrics metrics;
  double wall_seconds = 0.0;
  std::string checkpoint_path;
  std::size_t mixup_draws = 0;
};

RunOutcome run_training(const Options& base, const Dataset& ds,
                        const std::string& dataset_name,
                        const std::string& variant, std::uint64_t seed,
                        bool write_outputs) {
  Options o = base;
  TrainConfig cfg = o.train;
  cfg.seed = seed;
  cfg.split_ratio = o.split_ratio;
  cfg.val_fraction = o.val_fraction;
  apply_ablation(cfg, variant);

  Split split = stratified_split(ds, o.split_ratio, seed);

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result = train(ds, split, cfg);
  const auto t1 = std::chrono::steady_clock::now();

  RunOutcome out;
  out.dataset = dataset_name;
  out.variant = variant;
  out.seed = seed;
  out.metrics = result.history.test_metrics;
  out.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  out.mixup_draws = result.history.mixup_lambdas_epoch1.size();

  if (write_outputs) {
    fs::create_directories(o.out_dir);
    std::ostringstream stem;
    stem << dataset_name << "_" << variant << "_seed" << seed;
    out.checkpoint_path = (fs::path(o.out_dir) / (stem.str() + ".ckpt")).string();
    save_checkpoint(result.best_params, result.model_config, result.scaler,
                    out.checkpoint_path);

    const std::string hist_path =
        (fs::path(o.out_dir) / (stem.str() + "_history.csv")).string();
    std::ofstream hist(hist_path);
    hist << "epoch,focal,intra,inter,fvl,supcon,triplet,hybrid,"
            "accuracy,maP,maR,maF1,lr\n";
    for (std::size_t e = 0; e < result.history.epochs.size(); ++e) {
      const auto& r = result.history.epochs[e];
      hist << (e + 1) << ',' << r.mean_loss.focal << ',' << r.mean_loss.intra
           << ',' << r.mean_loss.inter << ',' << r.mean_loss.fvl << ','
           << r.mean_loss.supcon << ',' << r.mean_loss.triplet << ','
           << r.mean_loss.hybrid << ',' << r.selection_eval.accuracy << ','
           << r.selection_eval.maP << ',' << r.selection_eval.maR << ','
           << r.selection_eval.maF1 << ',' << r.last_lr << '\n';
    }
  }
  return out;
}

void print_run_record(const RunOutcome& r) {
  std::printf(
      "run dataset=%s variant=%s seed=%llu accuracy=%.4f maP=%.4f maR=%.4f "
      "maF1=%.4f wall_s=%.2f checkpoint=%s mixup_draws=%zu\n",
      r.dataset.c_str(), r.variant.c_str(),
      static_cast<unsigned long long>(r.seed), r.metrics.accuracy,
      r.metrics.maP, r.metrics.maR, r.metrics.maF1, r.wall_seconds,
      r.checkpoint_path.empty() ? "-" : r.checkpoint_path.c_str(),
      r.mixup_draws);
}

// ---------------------------------------------------------------------------

int cmd_train(Options& o) {
  echo_config(o, "train");
  Dataset ds = load_csv(o.data, o.label_column);
  apply_ablation(o.train, o.ablate);  // validates the name early
  const std::string variant = o.ablate.empty() ? "full" : o.ablate;
  RunOutcome r = run_training(o, ds, dataset_stem(o.data), variant, o.seed,
                              /*write_outputs=*/true);
  print_run_record(r);
  return 0;
}

int cmd_evaluate(Options& o) {
  echo_config(o, "evaluate");
  Checkpoint ck = load_checkpoint(o.checkpoint);
  Dataset ds = load_csv(o.data, o.label_column);
  detail::require_data(ds.num_features() == ck.config.input_dim,
                       "evaluate: dataset has " +
                           std::to_string(ds.num_features()) +
                           " features, checkpoint expects " +
                           std::to_string(ck.config.input_dim));
  detail::require_data(ds.num_classes() <= ck.config.num_classes,
                       "evaluate: dataset has more classes than checkpoint");

  std::vector<int> rows;
  if (o.eval_split == "all") {
    for (int i = 0; i < ds.num_samples(); ++i) rows.push_back(i);
  } else {
    Split split = stratified_split(ds, o.split_ratio, o.seed);
    rows = o.eval_split == "train" ? split.train_idx : split.test_idx;
  }
  Tensor X = ck.scaler.apply(take_rows(ds.X, rows));
  std::vector<int> y = take_labels(ds.y, rows);
  Metrics m = evaluate(ck.params, ck.config, X, y);
  std::printf("evaluate split=%s n=%zu accuracy=%.4f maP=%.4f maR=%.4f maF1=%.4f\n",
              o.eval_split.c_str(), y.size(), m.accuracy, m.maP, m.maR, m.maF1);
  return 0;
}

int cmd_export_embeddings(Options& o, const std::string& out_file) {
  Checkpoint ck = load_checkpoint(o.checkpoint);
  Dataset ds = load_csv(o.data, o.label_column);
  detail::require_data(ds.num_features() == ck.config.input_dim,
                       "export-embeddings: feature count mismatch");
  Tensor X = ck.scaler.apply(ds.X);
  std::vector<int> preds = predict(ck.params, ck.config, X);

  std::ofstream out(out_file);
  detail::require_data(out.good(),
                       "export-embeddings: cannot open '" + out_file + "'");
  for (int j = 0; j < ck.config.emb_dim; ++j) out << 'e' << j << ',';
  out << "label,pred\n";
  const int chunk = 512;
  char buf[40];
  for (int start = 0; start < X.rows(); start += chunk) {
    const int n = std::min(chunk, X.rows() - start);
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = start + i;
    Tensor batch = take_rows(X, rows);
    ForwardOutput fwd = model_forward(batch, ck.params, ck.config, Mode::eval);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < ck.config.emb_dim; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", fwd.embedding.at(i, j));
        out << buf << ',';
      }
      out << ds.y[static_cast<std::size_t>(start + i)] << ','
          << preds[static_cast<std::size_t>(start + i)] << '\n';
    }
  }
  std::cout << "export-embeddings wrote " << X.rows() << " rows to "
            << out_file << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench: datasets x variants x seeds, resumable, optional worker threads.

struct BenchKey {
  std::string dataset, variant;
  std::uint64_t seed;
  bool operator<(const BenchKey& o) const {
    return std::tie(dataset, variant, seed) <
           std::tie(o.dataset, o.variant, o.seed);
  }
};

std::set<BenchKey> read_existing_runs(const std::string& path) {
  std::set<BenchKey> keys;
  std::ifstream in(path);
  if (!in.good()) return keys;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    auto cells = detail::split_line(line, ',');
    if (cells.size() < 3) continue;
    keys.insert({cells[0], cells[1],
                 static_cast<std::uint64_t>(std::strtoull(cells[2].c_str(),
                                                          nullptr, 10))});
  }
  return keys;
}

void regenerate_results_csv(const std::string& runs_path,
                            const std::string& results_path) {
  std::ifstream in(runs_path);
  if (!in.good()) return;
  std::string line;
  std::getline(in, line);
  // (dataset, variant) -> sums over seeds for each metric
  std::map<std::pair<std::string, std::string>, std::array<double, 5>> acc;
  while (std::getline(in, line)) {
    auto cells = detail::split_line(line, ',');
    if (cells.size() < 7) continue;
    auto& slot = acc[{cells[0], cells[1]}];
    for (int m = 0; m < 4; ++m) slot[static_cast<std::size_t>(m)] += std::atof(cells[static_cast<std::size_t>(3 + m)].c_str());
    slot[4] += 1.0;
  }
  const std::string tmp = results_path + ".tmp";
  {
    std::ofstream out(tmp);
    out << "dataset,model,metric,value\n";
    const char* metric_names[4] = {"accuracy", "maP", "maR", "maF1"};
    for (const auto& [key, sums] : acc) {
      for (int m = 0; m < 4; ++m)
        out << key.first << ',' << key.second << ',' << metric_names[m] << ','
            << sums[static_cast<std::size_t>(m)] / sums[4] << '\n';
    }
  }
  fs::rename(tmp, results_path);
}

int cmd_bench(Options& o) {
  echo_config(o, "bench");
  auto entries = load_manifest(o.manifest);
  detail::require_data(!entries.empty(), "bench: manifest has no datasets");

  std::vector<std::string> variants = detail::split_line(o.variants, ',');
  for (auto& v : variants) {
    v = detail::trim(v);
    if (v != "full") {
      TrainConfig probe = o.train;  // validates the variant name
      apply_ablation(probe, v);
    }
  }

  std::vector<std::uint64_t> seeds;
  if (o.seeds.empty()) {
    seeds.push_back(o.seed);
  } else {
    for (auto& tok : detail::split_line(o.seeds, ',')) {
      seeds.push_back(static_cast<std::uint64_t>(
          std::strtoull(detail::trim(tok).c_str(), nullptr, 10)));
    }
  }

  fs::create_directories(o.out_dir);
  const std::string runs_path = (fs::path(o.out_dir) / "bench_runs.csv").string();
  const std::string results_path = (fs::path(o.out_dir) / "results.csv").string();
  std::set<BenchKey> done = read_existing_runs(runs_path);

  if (!fs::exists(runs_path)) {
    std::ofstream out(runs_path);
    out << "dataset,variant,seed,accuracy,maP,maR,maF1,wall_s,checkpoint\n";
  }

  // Datasets loaded once, shared read-only across workers. A dataset that
  // fails to load is recorded and skipped; the sweep continues.
  std::vector<Dataset> datasets(entries.size());
  std::vector<bool> loaded(entries.size(), false);
  int failures = 0;
  for (std::size_t d = 0; d < entries.size(); ++d) {
    try {
      datasets[d] = load_csv(entries[d].path, entries[d].label_column);
      datasets[d].name = entries[d].name;
      loaded[d] = true;
    } catch (const std::exception& e) {
      ++failures;
      std::cerr << "bench: dataset '" << entries[d].name
                << "' skipped: " << e.what() << "\n";
    }
  }

  struct WorkItem {
    std::size_t dataset_idx;
    std::string variant;
    std::uint64_t seed;
  };
  std::vector<WorkItem> work;
  for (std::size_t d = 0; d < entries.size(); ++d) {
    if (!loaded[d]) continue;
    for (const auto& v : variants)
      for (auto s : seeds)
        if (!done.count({entries[d].name, v, s})) work.push_back({d, v, s});
  }
  std::cout << "bench: " << work.size() << " run(s) to do, "
            << done.size() << " already present\n";

  std::mutex io_mutex;
  std::size_t next = 0;
  std::mutex next_mutex;

  auto worker = [&]() {
    for (;;) {
      std::size_t idx;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next >= work.size()) return;
        idx = next++;
      }
      const WorkItem& item = work[idx];
      const auto& entry = entries[item.dataset_idx];
      try {
        RunOutcome r = run_training(o, datasets[item.dataset_idx], entry.name,
                                    item.variant, item.seed,
                                    /*write_outputs=*/true);
        std::lock_guard<std::mutex> lock(io_mutex);
        std::ofstream out(runs_path, std::ios::app);
        out << r.dataset << ',' << r.variant << ',' << r.seed << ','
            << r.metrics.accuracy << ',' << r.metrics.maP << ','
            << r.metrics.maR << ',' << r.metrics.maF1 << ','
            << r.wall_seconds << ',' << r.checkpoint_path << '\n';
        out.flush();
        print_run_record(r);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(io_mutex);
        ++failures;
        std::cerr << "bench: run (" << entry.name << ", " << item.variant
                  << ", seed " << item.seed << ") failed: " << e.what() << "\n";
      }
    }
  };

  const int jobs = std::max(1, o.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  regenerate_results_csv(runs_path, results_path);
  std::cout << "bench: results table written to " << results_path;
  if (failures > 0) std::cout << " (" << failures << " run(s) failed)";
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// stats: per-metric Friedman tests plus the global aggregate over mean ranks.

int cmd_stats(Options& o) {
  std::ifstream in(o.results);
  detail::require_data(in.good(), "stats: cannot open '" + o.results + "'");
  std::string line;
  detail::require_data(static_cast<bool>(std::getline(in, line)),
                       "stats: empty results file");
  {
    auto header = detail::split_line(line, ',');
    detail::require_data(header.size() == 4 && header[0] == "dataset" &&
                             header[1] == "model" && header[2] == "metric" &&
                             header[3] == "value",
                         "stats: expected header dataset,model,metric,value");
  }

  // metric -> dataset -> model -> value
  std::map<std::string, std::map<std::string, std::map<std::string, double>>> table;
  std::set<std::string> model_set, dataset_set;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_line(line, ',');
    detail::require_data(cells.size() == 4, "stats: malformed row '" + line + "'");
    double value;
    detail::require_data(detail::parse_double(cells[3], value),
                         "stats: bad value in row '" + line + "'");
    table[cells[2]][cells[0]][cells[1]] = value;
    model_set.insert(cells[1]);
    dataset_set.insert(cells[0]);
  }
  detail::require_data(model_set.size() >= 2, "stats: need at least 2 models");
  detail::require_data(dataset_set.size() >= 2, "stats: need at least 2 datasets");

  const std::vector<std::string> models(model_set.begin(), model_set.end());
  const double alpha = 0.05;

  fs::create_directories(o.out_dir);
  const std::string report_path = (fs::path(o.out_dir) / "stats_report.csv").string();
  std::ofstream report(report_path);
  report << "metric,chi2,chi2_corrected,p,decision\n";

  std::printf("%-10s %10s %14s %12s %10s\n", "metric", "chi2", "chi2_corr",
              "p", "decision");
  std::vector<std::vector<double>> metric_mean_ranks;
  std::vector<std::string> metric_order;
  for (const auto& [metric, per_dataset] : table) {
    std::vector<std::vector<double>> scores;
    for (const auto& [dataset, per_model] : per_dataset) {
      std::vector<double> row;
      bool complete = true;
      for (const auto& m : models) {
        auto it = per_model.find(m);
        if (it == per_model.end()) {
          complete = false;
          break;
        }
        row.push_back(it->second);
      }
      if (complete) scores.push_back(std::move(row));
    }
    detail::require_data(scores.size() >= 2, "stats: metric '" + metric +
                                                 "' has < 2 complete datasets");
    RankMatrix rm = rank_models(scores, /*higher_is_better=*/true);
    FriedmanResult fr = friedman_test(rm);
    const char* decision =
        fr.p_chi2_corrected < alpha ? "Reject" : "Fail to reject";
    std::printf("%-10s %10.4f %14.4f %12.4g %10s\n", metric.c_str(), fr.chi2,
                fr.chi2_corrected, fr.p_chi2_corrected, decision);
    report << metric << ',' << fr.chi2 << ',' << fr.chi2_corrected << ','
           << fr.p_chi2_corrected << ',' << decision << '\n';
    metric_mean_ranks.push_back(fr.mean_ranks);
    metric_order.push_back(metric);
  }

  if (metric_mean_ranks.size() < 2) {
    std::cout << "\nglobal test skipped: needs at least two metrics\n";
    std::cout << "stats: report written to " << report_path << "\n";
    return 0;
  }

  std::cout << "\nmean ranks per model (lower is better):\n";
  {
    FriedmanResult global = friedman_on_mean_ranks(metric_mean_ranks,
                                                   o.rerank_global);
    for (std::size_t j = 0; j < models.size(); ++j)
      std::printf("  %-24s %.3f\n", models[j].c_str(), global.mean_ranks[j]);

    const double fcrit = f_critical(alpha, global.df1, global.df2);
    const bool reject = !global.F_F_infinite && global.F_F > fcrit;
    const char* decision =
        (global.F_F_infinite || reject) ? "Reject" : "Fail to reject";
    std::printf(
        "\nglobal: chi2=%.4f F_F=%.4f df=(%d,%d) F_crit(%.2f)=%.4f -> %s\n",
        global.chi2, global.F_F, global.df1, global.df2, alpha, fcrit,
        decision);
    report << "global" << ',' << global.chi2 << ',' << global.chi2_corrected
           << ',' << f_sf(global.F_F, global.df1, global.df2) << ','
           << decision << '\n';
  }
  std::cout << "stats: report written to " << report_path << "\n";
  return 0;
}

int cmd_gradcheck(Options& o) {
  auto reports = run_grad_suite(o.seed, o.gradcheck_instances, o.op_filter);
  detail::require_data(!reports.empty(),
                       "gradcheck: no checks match filter '" + o.op_filter + "'");
  bool all_ok = true;
  std::printf("%-24s %12s %10s %6s\n", "check", "max_rel_err", "threshold",
              "status");
  for (const auto& r : reports) {
    all_ok = all_ok && r.passed();
    std::printf("%-24s %12.3e %10.0e %6s\n", r.name.c_str(), r.max_rel_err,
                r.threshold, r.passed() ? "ok" : "FAIL");
  }
  std::printf("gradcheck: %zu check(s), %s\n", reports.size(),
              all_ok ? "all passed" : "FAILURES present");
  if (!all_ok) throw numeric_error("gradcheck: at least one check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qclmix: imbalanced tabular classification toolkit"};
  app.require_subcommand(1);

  Options o;
  std::string export_out = "embeddings.csv";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config_file, "flat key = value config file");
    cmd->add_option("--seed", o.seed, "run seed");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--val-fraction", o.val_fraction,
                    "validation share carved from train for model selection");
    cmd->add_option("--split-ratio", o.split_ratio, "held-out test fraction");
    cmd->add_option("--label-column", o.label_column,
                    "label column name, or 'last'");
    cmd->add_option("--epochs", o.train.epochs, "training epochs");
    cmd->add_option("--batch-size", o.train.batch_size, "mini-batch size");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train one model");
  train_cmd->add_option("--data", o.data, "dataset CSV")->required();
  train_cmd
      ->add_option("--ablate", o.ablate,
                   "variant: no-quantum | no-mixup | no-attention")
      ->check(CLI::IsMember({"no-quantum", "no-mixup", "no-attention"}));
  add_common(train_cmd);

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", o.data, "dataset CSV")->required();
  eval_cmd->add_option("--split", o.eval_split, "test | train | all")
      ->check(CLI::IsMember({"test", "train", "all"}));
  add_common(eval_cmd);

  CLI::App* bench_cmd = app.add_subcommand("bench", "datasets x variants x seeds");
  bench_cmd->add_option("--manifest", o.manifest, "manifest CSV")->required();
  bench_cmd->add_option("--variants", o.variants, "comma-separated variants");
  bench_cmd->add_option("--seeds", o.seeds, "comma-separated seeds");
  bench_cmd->add_option("--jobs", o.jobs, "parallel workers");
  add_common(bench_cmd);

  CLI::App* stats_cmd = app.add_subcommand("stats", "Friedman comparison report");
  stats_cmd->add_option("--results", o.results, "results CSV")->required();
  stats_cmd->add_flag("--rerank-global", o.rerank_global,
                      "re-rank mean ranks before the global test");
  add_common(stats_cmd);

  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference suite");
  grad_cmd->add_option("--op", o.op_filter, "restrict checks by substring");
  grad_cmd->add_option("--instances", o.gradcheck_instances,
                       "random instances per check");
  add_common(grad_cmd);

  CLI::App* export_cmd =
      app.add_subcommand("export-embeddings", "embeddings + labels + predictions");
  export_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  export_cmd->add_option("--data", o.data, "dataset CSV")->required();
  export_cmd->add_option("--out-file", export_out, "output CSV path");
  add_common(export_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }

  try {
    // Precedence: defaults < config file < explicit flags. Flags were parsed
    // into `o` already, so re-apply any that were explicitly given after the
    // file values land.
    if (!o.config_file.empty()) {
      Options flag_values = o;
      CLI::App* sub = app.get_subcommands().front();
      auto given = [&](const std::string& name) {
        const CLI::Option* opt = sub->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
      };
      for (const auto& [key, value] : read_config_file(o.config_file))
        apply_config_entry(o, key, value);
      if (given("--seed")) o.seed = flag_values.seed;
      if (given("--out")) o.out_dir = flag_values.out_dir;
      if (given("--val-fraction")) o.val_fraction = flag_values.val_fraction;
      if (given("--split-ratio")) o.split_ratio = flag_values.split_ratio;
      if (given("--label-column")) o.label_column = flag_values.label_column;
      if (given("--epochs")) o.train.epochs = flag_values.train.epochs;
      if (given("--batch-size")) o.train.batch_size = flag_values.train.batch_size;
    }
    o.train.seed = o.seed;
    o.train.split_ratio = o.split_ratio;
    o.train.val_fraction = o.val_fraction;

    if (app.got_subcommand("train")) return cmd_train(o);
    if (app.got_subcommand("evaluate")) return cmd_evaluate(o);
    if (app.got_subcommand("bench")) return cmd_bench(o);
    if (app.got_subcommand("stats")) return cmd_stats(o);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(o);
    if (app.got_subcommand("export-embeddings"))
      return cmd_export_embeddings(o, export_out);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
