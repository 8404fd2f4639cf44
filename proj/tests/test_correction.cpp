#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ntmm/correction.hpp"
#include "ntmm/rng.hpp"

using namespace ntmm;

namespace {

// Independent brute-force oracle: repeated minimum extraction over the full
// distance list, then a scan-based vote. Same total order as the library
// contract: (distance, index) for neighbors; (votes, -total distance, class)
// for the winner.
CorrectedLabels brute_force_knn(const Tensor& features, const std::vector<int>& labels, int k) {
  const int n = features.rows();
  const int d = features.cols();
  int num_classes = 0;
  for (int label : labels) num_classes = std::max(num_classes, label + 1);
  std::vector<double> norms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += features.at(i, c) * features.at(i, c);
    norms[static_cast<std::size_t>(i)] = std::sqrt(s);
  }
  auto distance = [&](int i, int j) {
    double dot = 0.0;
    for (int c = 0; c < d; ++c) dot += features.at(i, c) * features.at(j, c);
    return 1.0 - dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
  };
  CorrectedLabels out;
  out.labels.resize(static_cast<std::size_t>(n));
  out.agreement.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    used[static_cast<std::size_t>(i)] = true;
    std::vector<int> neighbors;
    for (int pick = 0; pick < k; ++pick) {
      int best = -1;
      for (int j = 0; j < n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        if (best < 0 || distance(i, j) < distance(i, best) ||
            (distance(i, j) == distance(i, best) && j < best)) {
          best = j;
        }
      }
      used[static_cast<std::size_t>(best)] = true;
      neighbors.push_back(best);
    }
    std::vector<int> votes(static_cast<std::size_t>(num_classes), 0);
    std::vector<double> dist_sum(static_cast<std::size_t>(num_classes), 0.0);
    for (int j : neighbors) {
      ++votes[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])];
      dist_sum[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] += distance(i, j);
    }
    int winner = -1;
    for (int c = 0; c < num_classes; ++c) {
      if (votes[static_cast<std::size_t>(c)] == 0) continue;
      if (winner < 0 || votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(winner)] ||
          (votes[static_cast<std::size_t>(c)] == votes[static_cast<std::size_t>(winner)] &&
           dist_sum[static_cast<std::size_t>(c)] < dist_sum[static_cast<std::size_t>(winner)])) {
        winner = c;
      }
    }
    out.labels[static_cast<std::size_t>(i)] = winner;
    out.agreement[static_cast<std::size_t>(i)] =
        static_cast<double>(votes[static_cast<std::size_t>(winner)]) / static_cast<double>(k);
  }
  return out;
}

// Three Gaussian clusters around orthogonal axes: pairwise mean distance 6
// with unit within-cluster std.
struct ToyClusters {
  Tensor features;
  std::vector<int> true_labels;
  std::vector<int> observed;
};

ToyClusters three_cluster_toy(int per_cluster, double noise_rate, std::uint64_t seed) {
  Rng rng(seed);
  const int n = 3 * per_cluster;
  ToyClusters toy;
  toy.features = Tensor({n, 3});
  const double center = 6.0 / std::sqrt(2.0);
  int row = 0;
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < per_cluster; ++i, ++row) {
      for (int c = 0; c < 3; ++c) toy.features.at(row, c) = (c == k ? center : 0.0) + rng.gaussian();
      toy.true_labels.push_back(k);
    }
  }
  toy.observed = toy.true_labels;
  const int flips = static_cast<int>(std::llround(noise_rate * n));
  std::vector<int> order = rng.sample_without_replacement(n, flips);
  for (int idx : order) {
    const int old = toy.observed[static_cast<std::size_t>(idx)];
    toy.observed[static_cast<std::size_t>(idx)] = (old + 1 + static_cast<int>(rng.uniform_below(2))) % 3;
  }
  return toy;
}

}  // namespace

TEST_CASE("unanimous labels stay unanimous") {
  Rng rng(1);
  Tensor features({8, 4});
  for (std::int64_t i = 0; i < features.size(); ++i) features.data()[i] = rng.gaussian() + 2.0;
  const std::vector<int> labels(8, 3);
  const CorrectedLabels out = knn_correct(features, labels, 3);
  for (int i = 0; i < 8; ++i) {
    CHECK(out.labels[static_cast<std::size_t>(i)] == 3);
    CHECK(out.agreement[static_cast<std::size_t>(i)] == 1.0);
  }
}

TEST_CASE("k=1 copies the nearest neighbor's label") {
  // Four points on a line of angles; nearest by cosine is the adjacent one.
  Tensor features({4, 2}, {1.0, 0.0, 0.9848, 0.1736, 0.7071, 0.7071, 0.0, 1.0});
  const std::vector<int> labels{0, 1, 2, 3};
  const CorrectedLabels out = knn_correct(features, labels, 1);
  CHECK(out.labels[0] == 1);
  CHECK(out.labels[1] == 0);
  CHECK(out.labels[3] == 2);
  for (double a : out.agreement) CHECK(a == 1.0);
}

TEST_CASE("edge cases rejected") {
  Tensor features({3, 2}, {1, 0, 0, 1, 1, 1});
  CHECK_THROWS_AS(knn_correct(features, {0, 1, 0}, 3), std::invalid_argument);  // N <= k
  CHECK_THROWS_AS(knn_correct(features, {0, 1}, 1), std::invalid_argument);    // label count
  CHECK_THROWS_AS(knn_correct(features, {0, 1, 0}, 0), std::invalid_argument); // k < 1
}

TEST_CASE("matches the brute-force oracle on random datasets") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 20 + static_cast<int>(rng.uniform_below(180));
    const int d = 3 + static_cast<int>(rng.uniform_below(6));
    const int classes = 2 + static_cast<int>(rng.uniform_below(4));
    const int k = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n - 1)));
    Tensor features({n, d});
    for (std::int64_t i = 0; i < features.size(); ++i) features.data()[i] = rng.gaussian();
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(classes))));
    const CorrectedLabels mine = knn_correct(features, labels, k);
    const CorrectedLabels oracle = brute_force_knn(features, labels, k);
    CHECK(mine.labels == oracle.labels);
    CHECK(mine.agreement == oracle.agreement);
  }
}

TEST_CASE("three-cluster toy: correction beats 30% symmetric noise") {
  const ToyClusters toy = three_cluster_toy(20, 0.3, 5);
  const int n = 60;
  int observed_correct = 0;
  for (int i = 0; i < n; ++i)
    if (toy.observed[static_cast<std::size_t>(i)] == toy.true_labels[static_cast<std::size_t>(i)]) ++observed_correct;
  CHECK(observed_correct == 42);  // exactly 30% flipped

  const CorrectedLabels out = knn_correct(toy.features, toy.observed, 10);
  int corrected_correct = 0;
  for (int i = 0; i < n; ++i)
    if (out.labels[static_cast<std::size_t>(i)] == toy.true_labels[static_cast<std::size_t>(i)]) ++corrected_correct;
  const double corrected_acc = static_cast<double>(corrected_correct) / n;
  CHECK(corrected_acc >= 0.95);
  CHECK(corrected_acc > static_cast<double>(observed_correct) / n);
  for (double a : out.agreement) {
    CHECK(a > 0.0);
    CHECK(a <= 1.0);
  }
}

TEST_CASE("permutation consistency and determinism") {
  Rng rng(9);
  const int n = 40;
  Tensor features({n, 5});
  for (std::int64_t i = 0; i < features.size(); ++i) features.data()[i] = rng.gaussian();
  std::vector<int> labels;
  for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.uniform_below(3)));

  const CorrectedLabels a = knn_correct(features, labels, 5);
  const CorrectedLabels b = knn_correct(features, labels, 5);
  CHECK(a.labels == b.labels);  // determinism

  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm);
  Tensor permuted({n, 5});
  std::vector<int> permuted_labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 5; ++c) permuted.at(i, c) = features.at(perm[static_cast<std::size_t>(i)], c);
    permuted_labels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  const CorrectedLabels p = knn_correct(permuted, permuted_labels, 5);
  for (int i = 0; i < n; ++i) {
    CHECK(p.labels[static_cast<std::size_t>(i)] == a.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
  }
}

TEST_CASE("fuse_features concatenates row-normalized halves") {
  Tensor zv({2, 2}, {3, 4, 1, 0});
  Tensor za({2, 3}, {0, 2, 0, 1, 1, 1});
  const Tensor fused = fuse_features(zv, za);
  REQUIRE(fused.rows() == 2);
  REQUIRE(fused.cols() == 5);
  CHECK(fused.at(0, 0) == doctest::Approx(0.6));
  CHECK(fused.at(0, 1) == doctest::Approx(0.8));
  CHECK(fused.at(0, 3) == doctest::Approx(1.0));
  const double inv_sqrt3 = 1.0 / std::sqrt(3.0);
  CHECK(fused.at(1, 2) == doctest::Approx(inv_sqrt3));
  Tensor zero({2, 2});
  CHECK_THROWS_AS(fuse_features(zero, za), std::domain_error);
}
