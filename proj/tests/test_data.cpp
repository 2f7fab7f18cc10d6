#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <string>

#include "qclmix/data.hpp"
#include "qclmix/datagen.hpp"

using namespace qclmix;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = std::string("/tmp/qclmix_test_") + name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("load_csv basics") {
  const std::string path = write_temp(
      "basic.csv", "a,b,label\n1.0,2.0,b\n3.5,4.5,a\n5.0,6.0,b\n");
  Dataset ds = load_csv(path);
  REQUIRE(ds.num_samples() == 3);
  REQUIRE(ds.num_features() == 2);
  CHECK(ds.y == std::vector<int>{0, 1, 0});
  CHECK(ds.label_names == std::vector<std::string>{"b", "a"});
  CHECK(ds.X.at(1, 1) == 4.5);
  CHECK(ds.feature_names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("load_csv label column by name") {
  const std::string path = write_temp(
      "named.csv", "y,f0,f1\npos,1,2\nneg,3,4\n");
  Dataset ds = load_csv(path, "y");
  CHECK(ds.num_features() == 2);
  CHECK(ds.label_names == std::vector<std::string>{"pos", "neg"});
  CHECK_THROWS_AS(load_csv(path, "missing_col"), data_error);
}

TEST_CASE("load_csv error paths") {
  CHECK_THROWS_AS(load_csv("/tmp/does_not_exist_qclmix.csv"), data_error);

  const std::string header_only = write_temp("header.csv", "a,b,label\n");
  CHECK_THROWS_WITH(load_csv(header_only),
                    Catch::Matchers::ContainsSubstring("empty dataset"));

  const std::string ragged =
      write_temp("ragged.csv", "a,b,label\n1,2,x\n1,2,3,x\n");
  CHECK_THROWS_AS(load_csv(ragged), data_error);

  const std::string categorical =
      write_temp("cat.csv", "a,b,label\n1,red,x\n2,blue,y\n");
  CHECK_THROWS_WITH(load_csv(categorical),
                    Catch::Matchers::ContainsSubstring("column 'b'"));
}

TEST_CASE("load_csv drops rows with missing cells") {
  const std::string path = write_temp(
      "missing.csv", "a,b,label\n1,2,x\n,3,y\n4,?,x\n5,6,y\n");
  Dataset ds = load_csv(path);
  CHECK(ds.num_samples() == 2);
  CHECK(ds.dropped_rows == 2);
}

TEST_CASE("generated datasets match their published shapes") {
  Dataset ecoli = make_ecoli_like();
  CHECK(ecoli.num_samples() == 336);
  CHECK(ecoli.num_features() == 7);
  CHECK(ecoli.num_classes() == 2);

  // Round-trip through CSV keeps the shape.
  const std::string path = "/tmp/qclmix_test_ecoli.csv";
  write_csv(ecoli, path);
  Dataset loaded = load_csv(path);
  CHECK(loaded.num_samples() == 336);
  CHECK(loaded.num_features() == 7);
  CHECK(loaded.y == ecoli.y);

  Dataset glass = make_glass_like();
  CHECK(glass.num_samples() == 214);
  CHECK(glass.num_classes() == 6);
  CHECK(imbalance_ratio(glass.y) == Catch::Approx(7.5));
}

TEST_CASE("stratified split arithmetic and determinism") {
  // 90/10 two-class data at ratio 0.2: the test side takes 18 + 2.
  std::vector<double> flat;
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) {
    flat.push_back(i);
    labels.push_back(i < 90 ? 0 : 1);
  }
  Dataset ds;
  ds.X = Tensor::row_major(100, 1, flat);
  ds.y = labels;
  ds.label_names = {"maj", "min"};

  Split s1 = stratified_split(ds, 0.2, 42);
  CHECK(s1.test_idx.size() == 20);
  CHECK(s1.train_idx.size() == 80);
  int minority_in_test = 0;
  for (int i : s1.test_idx)
    if (ds.y[static_cast<std::size_t>(i)] == 1) ++minority_in_test;
  CHECK(minority_in_test == 2);

  Split s2 = stratified_split(ds, 0.2, 42);
  CHECK(s1.train_idx == s2.train_idx);
  CHECK(s1.test_idx == s2.test_idx);

  Split s3 = stratified_split(ds, 0.2, 43);
  CHECK(s1.test_idx != s3.test_idx);

  CHECK_THROWS_AS(stratified_split(ds, 0.0, 42), numeric_error);
  CHECK_THROWS_AS(stratified_split(ds, 1.0, 42), numeric_error);
}

TEST_CASE("split is disjoint and covering, label distribution preserved") {
  Dataset ds = make_glass_like();
  Split split = stratified_split(ds, 0.2, 42);
  std::vector<bool> seen(static_cast<std::size_t>(ds.num_samples()), false);
  for (int i : split.train_idx) seen[static_cast<std::size_t>(i)] = true;
  for (int i : split.test_idx) {
    CHECK_FALSE(seen[static_cast<std::size_t>(i)]);
    seen[static_cast<std::size_t>(i)] = true;
  }
  for (bool b : seen) CHECK(b);

  std::map<int, int> combined;
  for (int i : split.train_idx) ++combined[ds.y[static_cast<std::size_t>(i)]];
  for (int i : split.test_idx) ++combined[ds.y[static_cast<std::size_t>(i)]];
  std::map<int, int> original;
  for (int v : ds.y) ++original[v];
  CHECK(combined == original);
}

TEST_CASE("single-sample class goes entirely to train") {
  Dataset ds;
  ds.X = Tensor::row_major(5, 1, {1, 2, 3, 4, 5});
  ds.y = {0, 0, 0, 0, 1};
  ds.label_names = {"a", "b"};
  Split split = stratified_split(ds, 0.25, 1);
  for (int i : split.test_idx) CHECK(ds.y[static_cast<std::size_t>(i)] == 0);
  int count_b = 0;
  for (int i : split.train_idx)
    if (ds.y[static_cast<std::size_t>(i)] == 1) ++count_b;
  CHECK(count_b == 1);
}

TEST_CASE("abalone-shaped split majority fraction") {
  Dataset ds = make_abalone_like();
  CHECK(ds.num_samples() == 4177);
  CHECK(ds.num_features() == 10);
  CHECK(imbalance_ratio(ds.y) == Catch::Approx(3786.0 / 391.0));
  Split split = stratified_split(ds, 0.2, 42);
  int majority = 0;
  for (int i : split.test_idx)
    if (ds.y[static_cast<std::size_t>(i)] == 0) ++majority;
  const double frac =
      static_cast<double>(majority) / static_cast<double>(split.test_idx.size());
  CHECK(frac == Catch::Approx(0.907).margin(0.002));
}

TEST_CASE("standardize fits on train only") {
  Rng rng(9);
  Tensor train = Tensor::zeros({50, 3});
  Tensor test = Tensor::zeros({20, 3});
  for (double& v : train.data()) v = 3.0 + 2.0 * rng.normal();
  for (double& v : test.data()) v = 5.0 + 2.0 * rng.normal();
  // Make one feature constant.
  for (int i = 0; i < 50; ++i) train.at(i, 2) = 7.0;

  Standardized st = standardize(train, test);
  CHECK(st.scaler.zero_variance_features == 1);
  for (int i = 0; i < 50; ++i) CHECK(st.train_X.at(i, 2) == 0.0);

  for (int j = 0; j < 2; ++j) {
    double mean = 0.0, var = 0.0;
    for (int i = 0; i < 50; ++i) mean += st.train_X.at(i, j);
    mean /= 50;
    for (int i = 0; i < 50; ++i) {
      const double d = st.train_X.at(i, j) - mean;
      var += d * d;
    }
    var /= 50;
    CHECK(std::fabs(mean) < 1e-12);
    CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-12);
  }

  // Test columns were scaled with train statistics, so they keep an offset.
  double test_mean0 = 0.0;
  for (int i = 0; i < 20; ++i) test_mean0 += st.test_X.at(i, 0);
  test_mean0 /= 20;
  CHECK(std::fabs(test_mean0) > 0.1);

  // Standardizing already-standardized training data is a no-op.
  Standardized st2 = standardize(st.train_X, st.test_X);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(st2.train_X.at(i, j) ==
            Catch::Approx(st.train_X.at(i, j)).margin(1e-10));
}

TEST_CASE("imbalance ratio") {
  std::vector<int> y;
  for (int i = 0; i < 90; ++i) y.push_back(0);
  for (int i = 0; i < 10; ++i) y.push_back(1);
  CHECK(imbalance_ratio(y) == 9.0);

  std::vector<int> balanced(100);
  for (int i = 0; i < 100; ++i) balanced[static_cast<std::size_t>(i)] = i % 2;
  CHECK(imbalance_ratio(balanced) == 1.0);

  CHECK_THROWS_AS(imbalance_ratio(std::vector<int>(5, 0)), numeric_error);
}

TEST_CASE("manifest parsing") {
  const std::string path = write_temp(
      "manifest.csv",
      "# comment\nds1,/path/a.csv,last\nds2,/path/b.csv\n\nds3,/p,target\n");
  auto entries = load_manifest(path);
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].name == "ds1");
  CHECK(entries[1].label_column == "last");
  CHECK(entries[2].label_column == "target");

  const std::string bad = write_temp("manifest_bad.csv", "only_name\n");
  CHECK_THROWS_AS(load_manifest(bad), data_error);
}
