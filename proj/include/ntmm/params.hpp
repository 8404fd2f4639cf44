#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "ntmm/tape.hpp"
#include "ntmm/tensor.hpp"

namespace ntmm {

/// Named parameter tensors. std::map keeps iteration order deterministic.
using ParamStore = std::map<std::string, Tensor>;
using GradMap = std::map<std::string, Tensor>;

/// Binds parameters from a store onto a tape as differentiable leaves and
/// maps gradients back to names after backward().
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

  Tape::NodeId operator()(const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    auto pit = store_.find(name);
    if (pit == store_.end()) throw std::out_of_range("param binding: unknown parameter '" + name + "'");
    Tape::NodeId id = tape_.leaf(pit->second);
    ids_.emplace(name, id);
    return id;
  }

  /// One gradient per bound parameter, zero if the loss never touched it.
  GradMap grads() const {
    GradMap g;
    for (const auto& [name, id] : ids_) g.emplace(name, tape_.grad(id));
    return g;
  }

 private:
  Tape& tape_;
  const ParamStore& store_;
  std::map<std::string, Tape::NodeId> ids_;
};

}  // namespace ntmm
