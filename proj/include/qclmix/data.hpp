#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "qclmix/common.hpp"
#include "qclmix/rng.hpp"
#include "qclmix/tensor.hpp"

namespace qclmix {

struct Dataset {
  Tensor X;                  // N x D
  std::vector<int> y;        // contiguous labels in [0, C)
  std::vector<std::string> label_names;    // int label -> original token
  std::vector<std::string> feature_names;  // length D
  std::string name;
  int dropped_rows = 0;  // rows rejected for missing cells

  int num_samples() const { return X.rows(); }
  int num_features() const { return X.cols(); }
  int num_classes() const { return static_cast<int>(label_names.size()); }
};

struct Split {
  std::vector<int> train_idx;
  std::vector<int> test_idx;
  std::uint64_t seed = 42;
  double ratio = 0.2;
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "?" || cell == "NA" || cell == "NaN" ||
         cell == "nan";
}

inline bool parse_double(const std::string& cell, double& out) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end != begin && *end == '\0' && std::isfinite(out);
}

}  // namespace detail

// CSV ingestion: one header row, comma separated, all feature columns numeric.
// label_column selects by header name; the default "last" takes the final
// column. Labels are integer-encoded in order of first appearance. Rows with
// missing cells are dropped (counted in dropped_rows); any other non-numeric
// feature cell is an error naming the offending column.
inline Dataset load_csv(const std::string& path,
                        const std::string& label_column = "last") {
  std::ifstream in(path);
  detail::require_data(in.good(), "load_csv: cannot open '" + path + "'");

  std::string header_line;
  detail::require_data(static_cast<bool>(std::getline(in, header_line)),
                       "load_csv: '" + path + "' is empty");
  std::vector<std::string> header = detail::split_line(header_line, ',');
  for (auto& h : header) h = detail::trim(h);
  const std::size_t ncols = header.size();
  detail::require_data(ncols >= 2,
                       "load_csv: need at least one feature and a label column");

  std::size_t label_idx = ncols - 1;
  if (label_column != "last") {
    auto it = std::find(header.begin(), header.end(), label_column);
    detail::require_data(it != header.end(), "load_csv: unknown label column '" +
                                                 label_column + "'");
    label_idx = static_cast<std::size_t>(it - header.begin());
  }

  Dataset ds;
  ds.name = path;
  for (std::size_t c = 0; c < ncols; ++c)
    if (c != label_idx) ds.feature_names.push_back(header[c]);

  std::map<std::string, int> label_map;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 1;
  int rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells = detail::split_line(line, ',');
    detail::require_data(cells.size() == ncols,
                         "load_csv: row " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(ncols));
    bool missing = false;
    for (auto& cell : cells) {
      cell = detail::trim(cell);
      if (detail::is_missing(cell)) missing = true;
    }
    if (missing) {
      ++ds.dropped_rows;
      continue;
    }
    for (std::size_t c = 0; c < ncols; ++c) {
      if (c == label_idx) continue;
      double v;
      if (!detail::parse_double(cells[c], v)) {
        throw data_error("load_csv: non-numeric value '" + cells[c] +
                         "' in column '" + header[c] + "' (row " +
                         std::to_string(line_no) + ")");
      }
      values.push_back(v);
    }
    const std::string& token = cells[label_idx];
    auto it = label_map.find(token);
    int code;
    if (it == label_map.end()) {
      code = static_cast<int>(label_map.size());
      label_map.emplace(token, code);
      ds.label_names.push_back(token);
    } else {
      code = it->second;
    }
    ds.y.push_back(code);
    ++rows;
  }
  detail::require_data(rows > 0, "load_csv: empty dataset in '" + path + "'");
  if (ds.dropped_rows > 0) {
    std::cerr << "load_csv: dropped " << ds.dropped_rows
              << " row(s) with missing cells from " << path << "\n";
  }
  ds.X = Tensor::row_major(rows, static_cast<int>(ncols) - 1, std::move(values));
  return ds;
}

// Per-class shuffle-and-take split. Each class contributes
// round(ratio * class size) samples to the test side (never the whole class);
// classes with a single sample go entirely to train with a warning.
inline Split stratified_split(const Dataset& ds, double ratio = 0.2,
                              std::uint64_t seed = 42) {
  detail::require(ratio > 0.0 && ratio < 1.0,
                  "stratified_split: ratio must lie in (0, 1)");
  const int C = ds.num_classes();
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(C));
  for (int i = 0; i < ds.num_samples(); ++i)
    by_class[static_cast<std::size_t>(ds.y[static_cast<std::size_t>(i)])]
        .push_back(i);

  Split split;
  split.seed = seed;
  split.ratio = ratio;
  Rng rng(seed);
  for (int c = 0; c < C; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    if (idx.size() < 2) {
      std::cerr << "stratified_split: class '" << ds.label_names[c]
                << "' has " << idx.size()
                << " sample(s); assigning all to train\n";
      for (int i : idx) split.train_idx.push_back(i);
      continue;
    }
    rng.shuffle(idx);
    const auto n = static_cast<std::size_t>(idx.size());
    std::size_t n_test = static_cast<std::size_t>(
        std::llround(ratio * static_cast<double>(n)));
    n_test = std::min(n_test, n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_test)
        split.test_idx.push_back(idx[i]);
      else
        split.train_idx.push_back(idx[i]);
    }
  }
  std::sort(split.train_idx.begin(), split.train_idx.end());
  std::sort(split.test_idx.begin(), split.test_idx.end());
  return split;
}

struct Scaler {
  std::vector<double> mean;
  std::vector<double> std;
  int zero_variance_features = 0;

  // (x - mean) / std per column; zero-variance columns map to 0.
  Tensor apply(const Tensor& X) const {
    const int N = X.rows(), D = X.cols();
    detail::require(static_cast<std::size_t>(D) == mean.size(),
                    "Scaler::apply: feature count mismatch");
    Tensor out = Tensor::zeros({N, D});
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < D; ++j) {
        const double s = std[static_cast<std::size_t>(j)];
        out.at(i, j) = s > 0.0 ? (X.at(i, j) - mean[static_cast<std::size_t>(j)]) / s : 0.0;
      }
    return out;
  }
};

// Fit mean/std on the training matrix only (population std). Features with
// vanishing variance are flagged and squashed to zero by apply().
inline Scaler fit_scaler(const Tensor& train_X) {
  const int N = train_X.rows(), D = train_X.cols();
  detail::require(N >= 1, "fit_scaler: empty training matrix");
  Scaler sc;
  sc.mean.assign(static_cast<std::size_t>(D), 0.0);
  sc.std.assign(static_cast<std::size_t>(D), 0.0);
  for (int j = 0; j < D; ++j) {
    double m = 0.0;
    for (int i = 0; i < N; ++i) m += train_X.at(i, j);
    m /= N;
    double v = 0.0;
    for (int i = 0; i < N; ++i) {
      const double d = train_X.at(i, j) - m;
      v += d * d;
    }
    v /= N;
    sc.mean[static_cast<std::size_t>(j)] = m;
    const double s = std::sqrt(v);
    if (s < 1e-12) {
      sc.std[static_cast<std::size_t>(j)] = 0.0;
      ++sc.zero_variance_features;
    } else {
      sc.std[static_cast<std::size_t>(j)] = s;
    }
  }
  if (sc.zero_variance_features > 0) {
    std::cerr << "standardize: " << sc.zero_variance_features
              << " constant feature(s) scaled to zero\n";
  }
  return sc;
}

struct Standardized {
  Tensor train_X;
  Tensor test_X;
  Scaler scaler;
};

inline Standardized standardize(const Tensor& train_X, const Tensor& test_X) {
  Standardized out;
  out.scaler = fit_scaler(train_X);
  out.train_X = out.scaler.apply(train_X);
  out.test_X = out.scaler.apply(test_X);
  return out;
}

inline Tensor take_rows(const Tensor& X, const std::vector<int>& idx) {
  const int D = X.cols();
  Tensor out = Tensor::zeros({static_cast<int>(idx.size()), D});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int j = 0; j < D; ++j) out.at(static_cast<int>(r), j) = X.at(idx[r], j);
  return out;
}

inline std::vector<int> take_labels(const std::vector<int>& y,
                                    const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(y[static_cast<std::size_t>(i)]);
  return out;
}

// Largest class count divided by smallest.
inline double imbalance_ratio(const std::vector<int>& y) {
  std::map<int, std::int64_t> counts;
  for (int v : y) ++counts[v];
  detail::require(counts.size() >= 2, "imbalance_ratio: need >= 2 classes");
  std::int64_t lo = std::numeric_limits<std::int64_t>::max(), hi = 0;
  for (const auto& [label, n] : counts) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  return static_cast<double>(hi) / static_cast<double>(lo);
}

// Benchmark manifest: one `name,path,label_column` line per dataset.
// label_column may be omitted (defaults to "last"). Blank lines and lines
// starting with '#' are skipped.
struct ManifestEntry {
  std::string name;
  std::string path;
  std::string label_column = "last";
};

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  detail::require_data(in.good(), "load_manifest: cannot open '" + path + "'");
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto cells = detail::split_line(t, ',');
    detail::require_data(cells.size() == 2 || cells.size() == 3,
                         "load_manifest: line " + std::to_string(line_no) +
                             " must be name,path[,label_column]");
    ManifestEntry e;
    e.name = detail::trim(cells[0]);
    e.path = detail::trim(cells[1]);
    if (cells.size() == 3 && !detail::trim(cells[2]).empty())
      e.label_column = detail::trim(cells[2]);
    detail::require_data(!e.name.empty() && !e.path.empty(),
                         "load_manifest: empty name or path on line " +
                             std::to_string(line_no));
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace qclmix
