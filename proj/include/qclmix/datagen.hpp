#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "qclmix/data.hpp"
#include "qclmix/rng.hpp"

namespace qclmix {

// Deterministic generators for the sample datasets bundled with the project.
// Each mirrors the shape of a familiar public benchmark (row count, feature
// count, class balance) so the CLI and test suites run self-contained.

namespace datagen {

inline Dataset finalize(std::vector<std::vector<double>> rows,
                        std::vector<int> labels, int num_classes,
                        const std::string& name) {
  const int n = static_cast<int>(rows.size());
  const int d = static_cast<int>(rows.front().size());
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(n) * d);
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  Dataset ds;
  ds.X = Tensor::row_major(n, d, std::move(flat));
  ds.y = std::move(labels);
  ds.name = name;
  for (int j = 0; j < d; ++j) ds.feature_names.push_back("f" + std::to_string(j));
  for (int c = 0; c < num_classes; ++c)
    ds.label_names.push_back("c" + std::to_string(c));
  return ds;
}

}  // namespace datagen

// 336 x 7, binary, 301 vs 35 (imbalance about 8.6), mirroring the structure
// of the protein-localization benchmark binarized minority-vs-rest: a
// multi-modal majority (cluster sizes 143/77/52/29), two quasi-binary
// features (one nearly constant with a single deviating sample), values in
// [0, 1], and the minority pocket overlapping the second majority cluster
// with a small offset in two coordinates.
inline Dataset make_ecoli_like(std::uint64_t seed = 7) {
  Rng rng = Rng(seed).fork(0x65636fULL);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  auto clip01 = [](double v) { return std::max(0.0, std::min(1.0, v)); };

  // Cytoplasm-style cluster: low f5/f6.
  for (int i = 0; i < 143; ++i) {
    std::vector<double> x(7);
    x[0] = clip01(0.36 + 0.14 * rng.normal());
    x[1] = clip01(0.40 + 0.12 * rng.normal());
    x[2] = 0.48;
    x[3] = 0.5;
    x[4] = clip01(0.47 + 0.12 * rng.normal());
    x[5] = clip01(0.28 + 0.10 * rng.normal());
    x[6] = clip01(0.32 + 0.10 * rng.normal());
    rows.push_back(std::move(x));
    labels.push_back(0);
  }
  // Inner-membrane-style cluster: high f5/f6; the minority hides next to it.
  for (int i = 0; i < 77; ++i) {
    std::vector<double> x(7);
    x[0] = clip01(0.47 + 0.14 * rng.normal());
    x[1] = clip01(0.47 + 0.12 * rng.normal());
    x[2] = 0.48;
    x[3] = 0.5;
    x[4] = clip01(0.50 + 0.12 * rng.normal());
    x[5] = clip01(0.74 + 0.09 * rng.normal());
    x[6] = clip01(0.72 + 0.10 * rng.normal());
    rows.push_back(std::move(x));
    labels.push_back(0);
  }
  // Periplasm-style cluster: high f1.
  for (int i = 0; i < 52; ++i) {
    std::vector<double> x(7);
    x[0] = clip01(0.55 + 0.13 * rng.normal());
    x[1] = clip01(0.75 + 0.10 * rng.normal());
    x[2] = 0.48;
    x[3] = 0.5;
    x[4] = clip01(0.45 + 0.13 * rng.normal());
    x[5] = clip01(0.40 + 0.12 * rng.normal());
    x[6] = clip01(0.44 + 0.12 * rng.normal());
    rows.push_back(std::move(x));
    labels.push_back(0);
  }
  // Scattered leftovers with occasional f2 highs.
  for (int i = 0; i < 29; ++i) {
    std::vector<double> x(7);
    x[0] = clip01(0.60 + 0.18 * rng.normal());
    x[1] = clip01(0.55 + 0.18 * rng.normal());
    x[2] = (i % 3 == 0) ? 1.0 : 0.48;
    x[3] = 0.5;
    x[4] = clip01(0.55 + 0.15 * rng.normal());
    x[5] = clip01(0.55 + 0.20 * rng.normal());
    x[6] = clip01(0.60 + 0.20 * rng.normal());
    rows.push_back(std::move(x));
    labels.push_back(0);
  }
  // One majority sample deviates on the near-constant feature.
  rows[40][3] = 1.0;

  // Minority: overlaps the inner-membrane cluster, offset in f0 and f4.
  for (int i = 0; i < 35; ++i) {
    std::vector<double> x(7);
    x[0] = clip01(0.57 + 0.10 * rng.normal());
    x[1] = clip01(0.47 + 0.12 * rng.normal());
    x[2] = 0.48;
    x[3] = 0.5;
    x[4] = clip01(0.60 + 0.10 * rng.normal());
    x[5] = clip01(0.80 + 0.08 * rng.normal());
    x[6] = clip01(0.78 + 0.09 * rng.normal());
    rows.push_back(std::move(x));
    labels.push_back(1);
  }
  return datagen::finalize(std::move(rows), std::move(labels), 2, "ecoli_like");
}

// 4177 x 10, binary, 3786 vs 391 (imbalance about 9.68): overlapping
// correlated clouds, the same label skew as the shellfish-ring benchmark.
inline Dataset make_abalone_like(std::uint64_t seed = 11) {
  Rng rng = Rng(seed).fork(0x6162616cULL);
  const int n_major = 3786, n_minor = 391, d = 10;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  auto sample = [&](double shift, int label) {
    std::vector<double> x(d);
    const double size = rng.normal();  // shared latent size factor
    for (int j = 0; j < d; ++j)
      x[static_cast<std::size_t>(j)] = 0.8 * size + 0.6 * rng.normal() +
                                       shift * (j % 3 == 0 ? 1.0 : 0.25);
    rows.push_back(std::move(x));
    labels.push_back(label);
  };
  for (int i = 0; i < n_major; ++i) sample(0.0, 0);
  for (int i = 0; i < n_minor; ++i) sample(0.9, 1);
  return datagen::finalize(std::move(rows), std::move(labels), 2,
                           "abalone_like");
}

// 2000 x 16, binary, 1808 vs 192 (imbalance about 9.4), cleanly separable
// clusters in the spirit of the digit benchmarks.
inline Dataset make_pendigits_like(std::uint64_t seed = 13) {
  Rng rng = Rng(seed).fork(0x70656e64ULL);
  const int n_major = 1808, n_minor = 192, d = 16;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  auto sample = [&](int label) {
    std::vector<double> x(d);
    for (int j = 0; j < d; ++j) {
      const double center =
          label == 0 ? std::sin(0.7 * j) : std::sin(0.7 * j + 2.0) + 2.5;
      x[static_cast<std::size_t>(j)] = center + 0.45 * rng.normal();
    }
    rows.push_back(std::move(x));
    labels.push_back(label);
  };
  for (int i = 0; i < n_major; ++i) sample(0);
  for (int i = 0; i < n_minor; ++i) sample(1);
  return datagen::finalize(std::move(rows), std::move(labels), 2,
                           "pendigits_like");
}

// 214 x 10, six classes with counts 75/68/30/17/14/10 (imbalance 7.5).
inline Dataset make_glass_like(std::uint64_t seed = 17) {
  Rng rng = Rng(seed).fork(0x676c617373ULL);
  const int d = 10;
  const int counts[6] = {75, 68, 30, 17, 14, 10};
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (int c = 0; c < 6; ++c) {
    for (int i = 0; i < counts[c]; ++i) {
      std::vector<double> x(d);
      for (int j = 0; j < d; ++j) {
        const double center = 1.5 * std::cos(2.0 * std::numbers::pi *
                                             (c + 0.35 * j) / 6.0);
        x[static_cast<std::size_t>(j)] = center + 0.5 * rng.normal();
      }
      rows.push_back(std::move(x));
      labels.push_back(c);
    }
  }
  return datagen::finalize(std::move(rows), std::move(labels), 6, "glass_like");
}

// Small linearly separable two-class set for smoke tests.
inline Dataset make_separable_binary(int n = 200, int d = 4,
                                     std::uint64_t seed = 3) {
  Rng rng = Rng(seed).fork(0x736570ULL);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    std::vector<double> x(d);
    for (int j = 0; j < d; ++j)
      x[static_cast<std::size_t>(j)] =
          (label == 0 ? -2.0 : 2.0) + 0.5 * rng.normal();
    rows.push_back(std::move(x));
    labels.push_back(label);
  }
  return datagen::finalize(std::move(rows), std::move(labels), 2, "separable");
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  detail::require_data(out.good(), "write_csv: cannot open '" + path + "'");
  for (int j = 0; j < ds.num_features(); ++j) out << ds.feature_names[static_cast<std::size_t>(j)] << ',';
  out << "label\n";
  char buf[40];
  for (int i = 0; i < ds.num_samples(); ++i) {
    for (int j = 0; j < ds.num_features(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.X.at(i, j));
      out << buf << ',';
    }
    out << ds.label_names[static_cast<std::size_t>(ds.y[static_cast<std::size_t>(i)])] << '\n';
  }
}

}  // namespace qclmix
