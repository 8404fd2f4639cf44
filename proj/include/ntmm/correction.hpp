#pragma once

#include <vector>

#include "ntmm/tensor.hpp"

namespace ntmm {

struct CorrectedLabels {
  std::vector<int> labels;
  std::vector<double> agreement;  // mode count / k
};

/// KNN majority vote over fused features (rows of an [N, 2d] matrix built
/// from per-modality L2-normalized features). Neighbors are the k smallest
/// cosine distances excluding self, ties broken by index; class ties break
/// by smaller total distance, then lower class index. Exact all-pairs
/// computation, fully deterministic.
CorrectedLabels knn_correct(const Tensor& fused_features, const std::vector<int>& observed_labels, int k);

/// Concatenates row-normalized visual and audio feature matrices.
Tensor fuse_features(const Tensor& features_v, const Tensor& features_a);

}  // namespace ntmm
