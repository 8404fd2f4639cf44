#include "ntmm/correction.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ntmm {

Tensor fuse_features(const Tensor& features_v, const Tensor& features_a) {
  if (features_v.rows() != features_a.rows())
    throw std::invalid_argument("fuse_features: modality row counts disagree");
  const int n = features_v.rows();
  const int dv = features_v.cols(), da = features_a.cols();
  Tensor out({n, dv + da});
  auto copy_normalized = [&](const Tensor& src, int offset) {
    for (int i = 0; i < n; ++i) {
      double norm = 0.0;
      for (int j = 0; j < src.cols(); ++j) norm += src.at(i, j) * src.at(i, j);
      norm = std::sqrt(norm);
      if (norm < 1e-300) throw std::domain_error("fuse_features: zero feature vector at row " + std::to_string(i));
      for (int j = 0; j < src.cols(); ++j) out.at(i, offset + j) = src.at(i, j) / norm;
    }
  };
  copy_normalized(features_v, 0);
  copy_normalized(features_a, dv);
  return out;
}

CorrectedLabels knn_correct(const Tensor& fused_features, const std::vector<int>& observed_labels, int k) {
  const int n = fused_features.rows();
  if (static_cast<int>(observed_labels.size()) != n)
    throw std::invalid_argument("knn_correct: label count does not match feature rows");
  if (k < 1) throw std::invalid_argument("knn_correct: k must be >= 1");
  if (n <= k) throw std::invalid_argument("knn_correct: need more than k samples, got " + std::to_string(n));

  int num_classes = 0;
  for (int label : observed_labels) {
    if (label < 0) throw std::invalid_argument("knn_correct: negative label");
    num_classes = std::max(num_classes, label + 1);
  }

  const int d = fused_features.cols();
  // Unit rows up front turn cosine distances into plain dot products.
  std::vector<double> unit(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    const double* src = fused_features.data() + static_cast<std::size_t>(i) * d;
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += src[c] * src[c];
    const double norm = std::sqrt(s);
    if (norm < 1e-300) throw std::domain_error("knn_correct: zero fused feature at row " + std::to_string(i));
    double* dst = unit.data() + static_cast<std::size_t>(i) * d;
    for (int c = 0; c < d; ++c) dst[c] = src[c] / norm;
  }

  CorrectedLabels out;
  out.labels.resize(static_cast<std::size_t>(n));
  out.agreement.resize(static_cast<std::size_t>(n));

  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n - 1));
  std::vector<int> votes(static_cast<std::size_t>(num_classes));
  std::vector<double> class_dist(static_cast<std::size_t>(num_classes));
  for (int i = 0; i < n; ++i) {
    const double* ri = unit.data() + static_cast<std::size_t>(i) * d;
    std::size_t m = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* rj = unit.data() + static_cast<std::size_t>(j) * d;
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += ri[c] * rj[c];
      dist[m++] = {1.0 - dot, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

    std::fill(votes.begin(), votes.end(), 0);
    std::fill(class_dist.begin(), class_dist.end(), 0.0);
    for (int t = 0; t < k; ++t) {
      const int label = observed_labels[static_cast<std::size_t>(dist[static_cast<std::size_t>(t)].second)];
      ++votes[static_cast<std::size_t>(label)];
      class_dist[static_cast<std::size_t>(label)] += dist[static_cast<std::size_t>(t)].first;
    }
    int best = -1;
    for (int c = 0; c < num_classes; ++c) {
      if (votes[static_cast<std::size_t>(c)] == 0) continue;
      if (best < 0 || votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)] ||
          (votes[static_cast<std::size_t>(c)] == votes[static_cast<std::size_t>(best)] &&
           class_dist[static_cast<std::size_t>(c)] < class_dist[static_cast<std::size_t>(best)])) {
        best = c;
      }
    }
    out.labels[static_cast<std::size_t>(i)] = best;
    out.agreement[static_cast<std::size_t>(i)] =
        static_cast<double>(votes[static_cast<std::size_t>(best)]) / static_cast<double>(k);
  }
  return out;
}

}  // namespace ntmm
