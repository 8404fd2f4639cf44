#pragma once

#include <functional>
#include <string>

#include "ntmm/params.hpp"

namespace ntmm {

struct GradCheckResult {
  bool pass = false;
  double max_rel_err = 0.0;
  std::string worst_location;  // "param[flat_index]" of the worst element
  std::string failure;         // non-empty if probing hit a non-finite loss
};

/// Loss evaluated at the current parameter values. Must be deterministic and
/// must not mutate the store beyond the probe (the checker restores values).
using LossFn = std::function<double(const ParamStore&)>;

/// Analytic gradients at the current parameter values.
using GradFn = std::function<GradMap(const ParamStore&)>;

/// Compares analytic gradients against central finite differences,
/// elementwise, over every parameter in the store. Relative error uses
/// max(|analytic|, |numeric|) as the denominator; elements where both
/// magnitudes sit below 1e-6 are treated as matching zero (finite-difference
/// noise floor).
GradCheckResult finite_diff_check(const LossFn& loss, const GradFn& grad, ParamStore& params, double step,
                                  double tolerance);

}  // namespace ntmm
