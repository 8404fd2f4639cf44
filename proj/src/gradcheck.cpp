#include "ntmm/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace ntmm {

GradCheckResult finite_diff_check(const LossFn& loss, const GradFn& grad, ParamStore& params, double step,
                                  double tolerance) {
  GradCheckResult res;
  res.pass = true;

  GradMap analytic = grad(params);
  for (auto& [name, p] : params) {
    auto git = analytic.find(name);
    if (git == analytic.end()) {
      // A parameter the loss never touched claims a zero gradient; the
      // finite differences below verify that claim.
      git = analytic.emplace(name, Tensor(p.shape())).first;
    }
    const Tensor& g = git->second;
    if (!g.same_shape(p)) {
      throw std::logic_error("finite_diff_check: gradient shape mismatch for parameter '" + name + "'");
    }
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const double orig = p.data()[i];
      p.data()[i] = orig + step;
      const double lp = loss(params);
      p.data()[i] = orig - step;
      const double lm = loss(params);
      p.data()[i] = orig;
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        res.pass = false;
        res.failure = "non-finite loss probing " + name + "[" + std::to_string(i) + "]";
        return res;
      }
      const double numeric = (lp - lm) / (2.0 * step);
      const double g_a = g.data()[i];
      const double scale = std::max(std::abs(g_a), std::abs(numeric));
      if (scale < 1e-6) continue;
      const double rel = std::abs(g_a - numeric) / scale;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_location = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  res.pass = res.max_rel_err <= tolerance;
  return res;
}

}  // namespace ntmm
