#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "qclmix/mixup.hpp"
#include "qclmix/rng.hpp"

using namespace qclmix;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Full-sort reference for the neighbor lists.
std::vector<std::vector<int>> knn_reference(const Tensor& batch, int k) {
  const int B = batch.rows(), D = batch.cols();
  std::vector<std::vector<int>> out(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i) {
    std::vector<std::pair<double, int>> all;
    for (int j = 0; j < B; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (int f = 0; f < D; ++f) {
        const double d = batch.at(i, f) - batch.at(j, f);
        d2 += d * d;
      }
      all.push_back({d2, j});
    }
    std::sort(all.begin(), all.end());
    for (int q = 0; q < k; ++q) out[static_cast<std::size_t>(i)].push_back(all[static_cast<std::size_t>(q)].second);
  }
  return out;
}

}  // namespace

TEST_CASE("knn on collinear points") {
  Tensor pts = Tensor::row_major(3, 1, {0.0, 1.0, 10.0});
  auto nn = knn_neighbors(pts, 1);
  CHECK(nn[0] == std::vector<int>{1});
  CHECK(nn[1] == std::vector<int>{0});
  CHECK(nn[2] == std::vector<int>{1});
}

TEST_CASE("knn distance ties break toward the lower index") {
  // Unit square: each corner has two neighbors at distance 1.
  Tensor square = Tensor::row_major(4, 2, {0, 0, 1, 0, 0, 1, 1, 1});
  auto nn = knn_neighbors(square, 1);
  CHECK(nn[0] == std::vector<int>{1});  // 1 and 2 tie; lower index wins
  CHECK(nn[1] == std::vector<int>{0});  // 0 and 3 tie
  CHECK(nn[2] == std::vector<int>{0});
  CHECK(nn[3] == std::vector<int>{1});
}

TEST_CASE("knn matches the exhaustive reference") {
  Rng rng(41);
  Tensor batch = random_tensor({64, 10}, rng);
  auto got = knn_neighbors(batch, 5);
  auto want = knn_reference(batch, 5);
  CHECK(got == want);

  CHECK_THROWS_AS(knn_neighbors(random_tensor({4, 2}, rng), 4), numeric_error);
  CHECK_THROWS_AS(knn_neighbors(random_tensor({4, 2}, rng), 5), numeric_error);
}

TEST_CASE("beta sampling moments") {
  const int n = 100000;

  Rng rng_uniform(1);
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += sample_beta(1.0, rng_uniform);
  mean /= n;
  CHECK(mean == Catch::Approx(0.5).margin(0.01));

  Rng rng_sym(2);
  double mean2 = 0.0;
  for (int i = 0; i < n; ++i) mean2 += sample_beta(0.7, rng_sym);
  mean2 /= n;
  CHECK(mean2 == Catch::Approx(0.5).margin(0.01));

  Rng rng_var(3);
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = sample_beta(0.4, rng_var);
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    m += v;
    m2 += v * v;
  }
  m /= n;
  m2 /= n;
  const double variance = m2 - m * m;
  // Var Beta(a, a) = 1 / (4 (2a + 1)).
  CHECK(variance == Catch::Approx(1.0 / (4.0 * (2.0 * 0.4 + 1.0))).margin(0.005));

  Rng bad(4);
  CHECK_THROWS_AS(sample_beta(0.0, bad), numeric_error);
  CHECK_THROWS_AS(sample_beta(-1.0, bad), numeric_error);
}

TEST_CASE("mixup lambda rule") {
  // max(lambda, 1 - lambda): a draw of 0.3 becomes 0.7.
  CHECK(std::max(0.3, 1.0 - 0.3) == Catch::Approx(0.7));

  Rng rng(5);
  Tensor x = random_tensor({16, 3}, rng);
  std::vector<int> y(16, 0);
  for (int i = 0; i < 8; ++i) y[static_cast<std::size_t>(i)] = 1;
  MixupConfig cfg;
  MixedBatch mb = mixup_batch(x, y, 2, cfg, rng);
  for (double lam : mb.lambdas) {
    CHECK(lam >= 0.5);
    CHECK(lam <= 1.0);
  }
  CHECK(mb.y_orig == y);
}

TEST_CASE("degenerate batch of identical rows mixes to itself") {
  Tensor x = Tensor::zeros({8, 3});
  for (double& v : x.data()) v = 1.5;
  std::vector<int> y(8, 0);
  Rng rng(6);
  MixupConfig cfg;
  MixedBatch mb = mixup_batch(x, y, 2, cfg, rng);
  for (std::size_t i = 0; i < mb.x_mix.data().size(); ++i)
    CHECK(mb.x_mix.data()[i] == 1.5);
}

TEST_CASE("mixup replay oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int B = 12 + static_cast<int>(rng.bounded(10));
    Tensor x = random_tensor({B, 6}, rng);
    std::vector<int> y;
    for (int i = 0; i < B; ++i) y.push_back(static_cast<int>(rng.bounded(3)));
    MixupConfig cfg;
    MixedBatch mb = mixup_batch(x, y, 3, cfg, rng);
    auto brute = knn_reference(x, cfg.k_neighbors);
    for (int i = 0; i < B; ++i) {
      const int j = mb.neighbor[static_cast<std::size_t>(i)];
      const double lam = mb.lambdas[static_cast<std::size_t>(i)];
      // Chosen neighbor comes from the true k-nearest set.
      const auto& knn = brute[static_cast<std::size_t>(i)];
      CHECK(std::find(knn.begin(), knn.end(), j) != knn.end());
      for (int f = 0; f < 6; ++f) {
        const double want = lam * x.at(i, f) + (1.0 - lam) * x.at(j, f);
        CHECK(mb.x_mix.at(i, f) == want);  // bit-exact replay
        // Convexity: the mix lies inside the coordinate interval.
        const double lo = std::min(x.at(i, f), x.at(j, f));
        const double hi = std::max(x.at(i, f), x.at(j, f));
        CHECK(mb.x_mix.at(i, f) >= lo - 1e-12);
        CHECK(mb.x_mix.at(i, f) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("soft labels mix anchor with permutation partner") {
  Rng rng(8);
  const int B = 10;
  Tensor x = random_tensor({B, 4}, rng);
  std::vector<int> y;
  for (int i = 0; i < B; ++i) y.push_back(static_cast<int>(rng.bounded(3)));
  MixupConfig cfg;
  MixedBatch mb = mixup_batch(x, y, 3, cfg, rng);
  for (int i = 0; i < B; ++i) {
    double row_sum = 0.0;
    for (int c = 0; c < 3; ++c) row_sum += mb.y_mix.at(i, c);
    CHECK(row_sum == Catch::Approx(1.0).margin(1e-12));
    const int partner = mb.perm_partner[static_cast<std::size_t>(i)];
    const double lam = mb.lambdas[static_cast<std::size_t>(i)];
    Tensor want = Tensor::zeros({1, 3});
    want.at(0, y[static_cast<std::size_t>(i)]) += lam;
    want.at(0, y[static_cast<std::size_t>(partner)]) += 1.0 - lam;
    for (int c = 0; c < 3; ++c)
      CHECK(mb.y_mix.at(i, c) == Catch::Approx(want.at(0, c)).margin(1e-12));
  }
}

TEST_CASE("disabled mixup is the identity and draws nothing") {
  Rng rng_a(9), rng_b(9);
  Tensor x = random_tensor({8, 3}, rng_a);
  {
    Tensor x_b = random_tensor({8, 3}, rng_b);  // keep the streams aligned
    (void)x_b;
  }
  std::vector<int> y(8, 0);
  MixupConfig cfg;
  cfg.enabled = false;
  MixedBatch mb = mixup_batch(x, y, 2, cfg, rng_a);
  CHECK(mb.x_mix.data() == x.data());
  for (double lam : mb.lambdas) CHECK(lam == 1.0);
  // No randomness was consumed: the two streams still agree.
  CHECK(rng_a.next_u64() == rng_b.next_u64());
}

TEST_CASE("neighbor-guided mixing stays closer to the data than random pairs") {
  // Two well-separated Gaussian clusters. Averaged over trials, the distance
  // from a mixed point to its nearest original neighbor is smaller when the
  // partner comes from the k-nearest set than from a uniform random pick at
  // the same interpolation schedule.
  const int B = 64, D = 8, trials = 100;
  double knn_total = 0.0, random_total = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(1000 + static_cast<std::uint64_t>(trial));
    Tensor x = Tensor::zeros({B, D});
    std::vector<int> y(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i) {
      const int cluster = i % 2;
      y[static_cast<std::size_t>(i)] = cluster;
      for (int f = 0; f < D; ++f)
        x.at(i, f) = (cluster == 0 ? -3.0 : 3.0) + rng.normal();
    }
    MixupConfig cfg;
    MixedBatch mb = mixup_batch(x, y, 2, cfg, rng);

    auto nearest_original = [&](int row, const Tensor& points) {
      double best = 1e300;
      for (int j = 0; j < B; ++j) {
        double d2 = 0.0;
        for (int f = 0; f < D; ++f) {
          const double d = points.at(row, f) - x.at(j, f);
          d2 += d * d;
        }
        best = std::min(best, d2);
      }
      return std::sqrt(best);
    };

    Tensor random_mix = Tensor::zeros({B, D});
    for (int i = 0; i < B; ++i) {
      int j = static_cast<int>(rng.bounded(B - 1));
      if (j >= i) ++j;
      const double lam = mb.lambdas[static_cast<std::size_t>(i)];
      for (int f = 0; f < D; ++f)
        random_mix.at(i, f) = lam * x.at(i, f) + (1.0 - lam) * x.at(j, f);
    }

    for (int i = 0; i < B; ++i) {
      knn_total += nearest_original(i, mb.x_mix);
      random_total += nearest_original(i, random_mix);
    }
  }
  CHECK(knn_total / (trials * B) < random_total / (trials * B));
}
