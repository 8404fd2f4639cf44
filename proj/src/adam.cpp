#include "ntmm/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace ntmm {

std::int64_t Adam::step_count(const std::string& param) const {
  auto it = param_steps_.find(param);
  return it == param_steps_.end() ? 0 : it->second;
}

void Adam::step(ParamStore& params, const GradMap& grads) {
  ++step_count_;
  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) throw std::out_of_range("adam: gradient for unknown parameter '" + name + "'");
    Tensor& p = pit->second;
    if (!p.same_shape(g)) {
      throw std::invalid_argument("adam: gradient shape " + g.shape_str() + " does not match parameter '" + name +
                                  "' shape " + p.shape_str());
    }
    if (!g.all_finite()) throw std::runtime_error("adam: non-finite gradient for parameter '" + name + "'");
    const std::int64_t t = ++param_steps_[name];
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
    Tensor& m = m_.try_emplace(name, Tensor(p.shape())).first->second;
    Tensor& v = v_.try_emplace(name, Tensor(p.shape())).first->second;
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const double gi = g.data()[i];
      m.data()[i] = cfg_.beta1 * m.data()[i] + (1.0 - cfg_.beta1) * gi;
      v.data()[i] = cfg_.beta2 * v.data()[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m.data()[i] / bc1;
      const double vhat = v.data()[i] / bc2;
      p.data()[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace ntmm
