#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ntmm/params.hpp"
#include "ntmm/tensor.hpp"

namespace ntmm {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a named parameter store. Moment buffers are
/// created on first sight of a parameter and always share its shape. Bias
/// correction uses per-parameter update counts, so parameters that join a
/// later step (e.g. ones skipped on partial batches) are corrected properly.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update to every parameter present in `grads`.
  /// Non-finite gradients abort with the offending parameter's name.
  void step(ParamStore& params, const GradMap& grads);

  std::int64_t step_count() const { return step_count_; }
  std::int64_t step_count(const std::string& param) const;
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t step_count_ = 0;
  std::map<std::string, std::int64_t> param_steps_;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace ntmm
