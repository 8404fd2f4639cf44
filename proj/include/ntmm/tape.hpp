#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ntmm/tensor.hpp"

namespace ntmm {

/// Reverse-mode gradient tape. Operations evaluate eagerly and record a
/// backward closure; backward() replays the closures in reverse creation
/// order, which is a valid reverse-topological order because node inputs
/// always precede their outputs.
///
/// Values produced by non-differentiated procedures (Sinkhorn targets,
/// correspondence weights) enter through constant() and receive no gradient.
class Tape {
 public:
  using NodeId = int;

  /// Constant leaf: no gradient flows into it.
  NodeId constant(Tensor value);

  /// Differentiable leaf. Typically bound to a model parameter (the value is
  /// copied in; the caller maps ids back to parameters).
  NodeId leaf(Tensor value);

  // --- operations -------------------------------------------------------
  NodeId matmul(NodeId a, NodeId b);     // (M,N)x(N,P) -> (M,P)
  NodeId matmul_nt(NodeId a, NodeId b);  // (M,N)x(P,N)^T -> (M,P)
  NodeId add(NodeId a, NodeId b);        // same shape
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId scale(NodeId a, double c);
  NodeId add_rowvec(NodeId a, NodeId bias);  // bias shape [cols(a)]
  NodeId relu(NodeId a);
  NodeId rownorm(NodeId a);  // rows scaled to unit L2 norm; zero rows rejected
  NodeId softmax_rows(NodeId a);
  NodeId logsumexp_rows(NodeId a);  // -> [rows]
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId diag(NodeId a);  // square matrix -> [rows]
  NodeId sum(NodeId a);   // -> scalar
  NodeId mean(NodeId a);  // -> scalar

  /// Weighted sum with constant weights: sum_i a_i * w_i -> scalar.
  NodeId dot_const(NodeId a, const Tensor& w);

  /// Per-row cross-entropy against constant target rows:
  /// out_i = -sum_k targets(i,k) * log(max(probs(i,k), floor)).
  NodeId ce_rows_const(NodeId probs, const Tensor& targets, double floor = 1e-12);

  /// Per-row softmax cross-entropy against integer labels (numerically
  /// stable: logsumexp(logits_i) - logits_i[label_i]).
  NodeId ce_rows_labels(NodeId logits, const std::vector<int>& labels);

  // --- results ----------------------------------------------------------
  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  /// Run reverse pass from a scalar loss. Gradients accumulate per node and
  /// are retrievable until the tape is destroyed. Rejects non-scalar losses.
  void backward(NodeId loss);

  const Tensor& grad(NodeId id) const;

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void()> backprop;  // empty for leaves/constants
  };

  NodeId push(Tensor value, bool requires_grad, std::function<void()> backprop = {});
  Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
  bool rg(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  Tensor& grad_buf(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace ntmm
