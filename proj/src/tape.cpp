#include "ntmm/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ntmm {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_rank2(const Tensor& t, const char* op, const char* arg) {
  require(t.rank() == 2, std::string(op) + ": " + arg + " must be rank-2, got shape " + t.shape_str());
}

// C += A * B, all row-major dense.
void matmul_acc(const double* a, const double* b, double* c, int m, int n, int p) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * n;
    double* ci = c + static_cast<std::size_t>(i) * p;
    for (int k = 0; k < n; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b + static_cast<std::size_t>(k) * p;
      for (int j = 0; j < p; ++j) ci[j] += aik * bk[j];
    }
  }
}

// C += A * B^T. A is (M,N), B is (P,N), C is (M,P).
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int n, int p) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * n;
    double* ci = c + static_cast<std::size_t>(i) * p;
    for (int j = 0; j < p; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * n;
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += ai[k] * bj[k];
      ci[j] += s;
    }
  }
}

// C += A^T * B. A is (M,N), B is (M,P), C is (N,P).
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int n, int p) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * n;
    const double* bi = b + static_cast<std::size_t>(i) * p;
    for (int k = 0; k < n; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      double* ck = c + static_cast<std::size_t>(k) * p;
      for (int j = 0; j < p; ++j) ck[j] += aik * bi[j];
    }
  }
}

}  // namespace

Tape::NodeId Tape::push(Tensor value, bool requires_grad, std::function<void()> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

Tape::NodeId Tape::constant(Tensor value) { return push(std::move(value), false); }

Tape::NodeId Tape::leaf(Tensor value) { return push(std::move(value), true); }

const Tensor& Tape::grad(NodeId id) const {
  if (!ran_backward_) throw std::logic_error("tape: grad() before backward()");
  return nodes_[static_cast<std::size_t>(id)].grad;
}

void Tape::backward(NodeId loss) {
  const Tensor& lv = value(loss);
  require(lv.size() == 1, "tape: backward() loss must be scalar, got shape " + lv.shape_str());
  if (!std::isfinite(lv.item())) throw std::runtime_error("tape: backward() on non-finite loss");
  for (Node& n : nodes_) {
    n.grad = Tensor(n.value.shape());
  }
  node(loss).grad.data()[0] = 1.0;
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = node(id);
    if (n.requires_grad && n.backprop) n.backprop();
  }
  ran_backward_ = true;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_rank2(A, "matmul", "lhs");
  require_rank2(B, "matmul", "rhs");
  require(A.cols() == B.rows(), "matmul: inner dims disagree, " + A.shape_str() + " x " + B.shape_str());
  const int m = A.rows(), n = A.cols(), p = B.cols();
  Tensor out({m, p});
  matmul_acc(A.data(), B.data(), out.data(), m, n, p);
  NodeId id = push(std::move(out), rg(a) || rg(b));
  node(id).backprop = [this, a, b, id, m, n, p] {
    const Tensor& G = grad_buf(id);
    if (rg(a)) matmul_nt_acc(G.data(), value(b).data(), grad_buf(a).data(), m, p, n);
    if (rg(b)) matmul_tn_acc(value(a).data(), G.data(), grad_buf(b).data(), m, n, p);
  };
  return id;
}

Tape::NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_rank2(A, "matmul_nt", "lhs");
  require_rank2(B, "matmul_nt", "rhs");
  require(A.cols() == B.cols(), "matmul_nt: inner dims disagree, " + A.shape_str() + " x " + B.shape_str() + "^T");
  const int m = A.rows(), n = A.cols(), p = B.rows();
  Tensor out({m, p});
  matmul_nt_acc(A.data(), B.data(), out.data(), m, n, p);
  NodeId id = push(std::move(out), rg(a) || rg(b));
  node(id).backprop = [this, a, b, id, m, n, p] {
    const Tensor& G = grad_buf(id);  // (m,p)
    if (rg(a)) matmul_acc(G.data(), value(b).data(), grad_buf(a).data(), m, p, n);
    if (rg(b)) matmul_tn_acc(G.data(), value(a).data(), grad_buf(b).data(), m, p, n);
  };
  return id;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "add: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
  Tensor out = A;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] += B.data()[i];
  NodeId id = push(std::move(out), rg(a) || rg(b));
  node(id).backprop = [this, a, b, id] {
    const Tensor& G = grad_buf(id);
    if (rg(a)) {
      Tensor& ga = grad_buf(a);
      for (std::int64_t i = 0; i < G.size(); ++i) ga.data()[i] += G.data()[i];
    }
    if (rg(b)) {
      Tensor& gb = grad_buf(b);
      for (std::int64_t i = 0; i < G.size(); ++i) gb.data()[i] += G.data()[i];
    }
  };
  return id;
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "sub: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
  Tensor out = A;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] -= B.data()[i];
  NodeId id = push(std::move(out), rg(a) || rg(b));
  node(id).backprop = [this, a, b, id] {
    const Tensor& G = grad_buf(id);
    if (rg(a)) {
      Tensor& ga = grad_buf(a);
      for (std::int64_t i = 0; i < G.size(); ++i) ga.data()[i] += G.data()[i];
    }
    if (rg(b)) {
      Tensor& gb = grad_buf(b);
      for (std::int64_t i = 0; i < G.size(); ++i) gb.data()[i] -= G.data()[i];
    }
  };
  return id;
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "mul: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
  Tensor out = A;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] *= B.data()[i];
  NodeId id = push(std::move(out), rg(a) || rg(b));
  node(id).backprop = [this, a, b, id] {
    const Tensor& G = grad_buf(id);
    if (rg(a)) {
      Tensor& ga = grad_buf(a);
      const Tensor& B2 = value(b);
      for (std::int64_t i = 0; i < G.size(); ++i) ga.data()[i] += G.data()[i] * B2.data()[i];
    }
    if (rg(b)) {
      Tensor& gb = grad_buf(b);
      const Tensor& A2 = value(a);
      for (std::int64_t i = 0; i < G.size(); ++i) gb.data()[i] += G.data()[i] * A2.data()[i];
    }
  };
  return id;
}

Tape::NodeId Tape::scale(NodeId a, double c) {
  Tensor out = value(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] *= c;
  NodeId id = push(std::move(out), rg(a));
  node(id).backprop = [this, a, id, c] {
    const Tensor& G = grad_buf(id);
    Tensor& ga = grad_buf(a);
    for (std::int64_t i = 0; i < G.size(); ++i) ga.data()[i] += c * G.data()[i];
  };
  return id;
}

Tape::NodeId Tape::add_rowvec(NodeId a, NodeId bias) {
  const Tensor& A = value(a);
  const Tensor& b = value(bias);
  require_rank2(A, "add_rowvec", "lhs");
  require(b.rank() == 1 && b.size() == A.cols(),
          "add_rowvec: bias shape " + b.shape_str() + " does not match columns of " + A.shape_str());
  Tensor out = A;
  const int m = A.rows(), n = A.cols();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) += b.data()[j];
  NodeId id = push(std::move(out), rg(a) || rg(bias));
  node(id).backprop = [this, a, bias, id, m, n] {
    const Tensor& G = grad_buf(id);
    if (rg(a)) {
      Tensor& ga = grad_buf(a);
      for (std::int64_t i = 0; i < G.size(); ++i) ga.data()[i] += G.data()[i];
    }
    if (rg(bias)) {
      Tensor& gb = grad_buf(bias);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gb.data()[j] += G.at(i, j);
    }
  };
  return id;
}

Tape::NodeId Tape::relu(NodeId a) {
  Tensor out = value(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] = std::max(0.0, out.data()[i]);
  NodeId id = push(std::move(out), rg(a));
  node(id).backprop = [this, a, id] {
    const Tensor& G = grad_buf(id);
    const Tensor& X = value(a);
    Tensor& ga = grad_buf(a);
    for (std::int64_t i = 0; i < G.size(); ++i)
      if (X.data()[i] > 0.0) ga.data()[i] += G.data()[i];
  };
  return id;
}

Tape::NodeId Tape::rownorm(NodeId a) {
  const Tensor& A = value(a);
  require_rank2(A, "rownorm", "input");
  const int m = A.rows(), n = A.cols();
  Tensor out({m, n});
  std::vector<double> norms(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += A.at(i, j) * A.at(i, j);
    const double r = std::sqrt(s);
    if (!(r > 1e-300)) throw std::domain_error("rownorm: zero-norm row " + std::to_string(i));
    norms[static_cast<std::size_t>(i)] = r;
    for (int j = 0; j < n; ++j) out.at(i, j) = A.at(i, j) / r;
  }
  NodeId id = push(std::move(out), rg(a));
  node(id).backprop = [this, a, id, m, n, norms] {
    const Tensor& G = grad_buf(id);
    const Tensor& Y = value(id);
    Tensor& ga = grad_buf(a);
    for (int i = 0; i < m; ++i) {
      double gy = 0.0;
      for (int j = 0; j < n; ++j) gy += G.at(i, j) * Y.at(i, j);
      const double r = norms[static_cast<std::size_t>(i)];
      for (int j = 0; j < n; ++j) ga.at(i, j) += (G.at(i, j) - gy * Y.at(i, j)) / r;
    }
  };
  return id;
}

Tape::NodeId Tape::softmax_rows(NodeId a) {
  const Tensor& A = value(a);
  require_rank2(A, "softmax_rows", "input");
  const int m = A.rows(), n = A.cols();
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    double mx = A.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, A.at(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      const double e = std::exp(A.at(i, j) - mx);
      out.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < n; ++j) out.at(i, j) /= z;
  }
  NodeId id = push(std::move(out), rg(a));
  node(id).backprop = [this, a, id, m, n] {
    const Tensor& G = grad_buf(id);
    const Tensor& P = value(id);
    Tensor& ga = grad_buf(a);
    for (int i = 0; i < m; ++i) {
      double gp = 0.0;
      for (int j = 0; j < n; ++j) gp += G.at(i, j) * P.at(i, j);
      for (int j = 0; j < n; ++j) ga.at(i, j) += P.at(i, j) * (G.at(i, j) - gp);
    }
  };
  return id;
}

Tape::NodeId Tape::logsumexp_rows(NodeId a) {
  const Tensor& A = value(a);
  require_rank2(A, "logsumexp_rows", "input");
  const int m = A.rows(), n = A.cols();
  Tensor out({m});
  for (int i = 0; i < m; ++i) {
    double mx = A.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, A.at(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(A.at(i, j) - mx);
    out.data()[i] = mx + std::log(z);
  }
  NodeId id = push(std::move(out), rg(a));
  node(id).backprop = [this, a, id, m, n] {
    const Tensor& G = grad_buf(id);
    const Tensor& Y = value(id);
    const Tensor& X = value(a);
    Tensor& ga = grad_buf(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga.at(i, j) += G.data()[i] * std::exp(X.at(i, j) - Y.data()[i]);
  };
  return id;
}

Tape::NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_rank2(A, "concat_cols", "lhs");
  require_rank2(B, "concat_cols", "rhs");
  require(A.rows() == B.rows(), "concat_cols: row count mismatch " + A.shape_str() + " vs " + B.shape_str());
  const int m = A.rows(), na = A.cols(), nb = B.cols();
  Tensor out({m, na + nb});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < na; ++j) out.at(i, j) = A.at(i, j);
    for (int j = 0; j < nb; ++j) out.at(i, na + j) = B.at(i, j);
  }
  NodeId id = push(std::move(out), rg(a) || rg(b));
  node(id).backprop = [this, a, b, id, m, na, nb] {
    const Tensor& G = grad_buf(id);
    if (rg(a)) {
      Tensor& ga = grad_buf(a);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < na; ++j) ga.at(i, j) += G.at(i, j);
    }
    if (rg(b)) {
      Tensor& gb = grad_buf(b);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < nb; ++j) gb.at(i, j) += G.at(i, na + j);
    }
  };
  return id;
}

Tape::NodeId Tape::transpose(NodeId a) {
  const Tensor& A = value(a);
  require_rank2(A, "transpose", "input");
  const int m = A.rows(), n = A.cols();
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = A.at(i, j);
  NodeId id = push(std::move(out), rg(a));
  node(id).backprop = [this, a, id, m, n] {
    const Tensor& G = grad_buf(id);
    Tensor& ga = grad_buf(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga.at(i, j) += G.at(j, i);
  };
  return id;
}

Tape::NodeId Tape::diag(NodeId a) {
  const Tensor& A = value(a);
  require_rank2(A, "diag", "input");
  require(A.rows() == A.cols(), "diag: matrix not square, " + A.shape_str());
  const int m = A.rows();
  Tensor out({m});
  for (int i = 0; i < m; ++i) out.data()[i] = A.at(i, i);
  NodeId id = push(std::move(out), rg(a));
  node(id).backprop = [this, a, id, m] {
    const Tensor& G = grad_buf(id);
    Tensor& ga = grad_buf(a);
    for (int i = 0; i < m; ++i) ga.at(i, i) += G.data()[i];
  };
  return id;
}

Tape::NodeId Tape::sum(NodeId a) {
  const Tensor& A = value(a);
  double s = 0.0;
  for (std::int64_t i = 0; i < A.size(); ++i) s += A.data()[i];
  NodeId id = push(Tensor::scalar(s), rg(a));
  node(id).backprop = [this, a, id] {
    const double g = grad_buf(id).item();
    Tensor& ga = grad_buf(a);
    for (std::int64_t i = 0; i < ga.size(); ++i) ga.data()[i] += g;
  };
  return id;
}

Tape::NodeId Tape::mean(NodeId a) {
  const Tensor& A = value(a);
  require(A.size() > 0, "mean: empty tensor");
  double s = 0.0;
  for (std::int64_t i = 0; i < A.size(); ++i) s += A.data()[i];
  const double inv = 1.0 / static_cast<double>(A.size());
  NodeId id = push(Tensor::scalar(s * inv), rg(a));
  node(id).backprop = [this, a, id, inv] {
    const double g = grad_buf(id).item() * inv;
    Tensor& ga = grad_buf(a);
    for (std::int64_t i = 0; i < ga.size(); ++i) ga.data()[i] += g;
  };
  return id;
}

Tape::NodeId Tape::dot_const(NodeId a, const Tensor& w) {
  const Tensor& A = value(a);
  require(A.size() == w.size(), "dot_const: size mismatch " + A.shape_str() + " vs " + w.shape_str());
  double s = 0.0;
  for (std::int64_t i = 0; i < A.size(); ++i) s += A.data()[i] * w.data()[i];
  NodeId id = push(Tensor::scalar(s), rg(a));
  node(id).backprop = [this, a, id, w] {
    const double g = grad_buf(id).item();
    Tensor& ga = grad_buf(a);
    for (std::int64_t i = 0; i < ga.size(); ++i) ga.data()[i] += g * w.data()[i];
  };
  return id;
}

Tape::NodeId Tape::ce_rows_const(NodeId probs, const Tensor& targets, double floor) {
  const Tensor& P = value(probs);
  require_rank2(P, "ce_rows_const", "probs");
  require(P.same_shape(targets),
          "ce_rows_const: target shape " + targets.shape_str() + " does not match probs " + P.shape_str());
  const int m = P.rows(), n = P.cols();
  Tensor out({m});
  for (int i = 0; i < m; ++i) {
    double ce = 0.0;
    for (int j = 0; j < n; ++j) ce -= targets.at(i, j) * std::log(std::max(P.at(i, j), floor));
    out.data()[i] = ce;
  }
  NodeId id = push(std::move(out), rg(probs));
  node(id).backprop = [this, probs, id, targets, floor, m, n] {
    const Tensor& G = grad_buf(id);
    const Tensor& P2 = value(probs);
    Tensor& gp = grad_buf(probs);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        if (P2.at(i, j) >= floor) gp.at(i, j) -= G.data()[i] * targets.at(i, j) / P2.at(i, j);
  };
  return id;
}

Tape::NodeId Tape::ce_rows_labels(NodeId logits, const std::vector<int>& labels) {
  const Tensor& L = value(logits);
  require_rank2(L, "ce_rows_labels", "logits");
  const int m = L.rows(), n = L.cols();
  require(static_cast<int>(labels.size()) == m,
          "ce_rows_labels: " + std::to_string(labels.size()) + " labels for " + std::to_string(m) + " rows");
  for (int i = 0; i < m; ++i)
    require(labels[static_cast<std::size_t>(i)] >= 0 && labels[static_cast<std::size_t>(i)] < n,
            "ce_rows_labels: label " + std::to_string(labels[static_cast<std::size_t>(i)]) +
                " out of range [0," + std::to_string(n) + ") at row " + std::to_string(i));
  Tensor out({m});
  for (int i = 0; i < m; ++i) {
    double mx = L.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, L.at(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(L.at(i, j) - mx);
    out.data()[i] = mx + std::log(z) - L.at(i, labels[static_cast<std::size_t>(i)]);
  }
  NodeId id = push(std::move(out), rg(logits));
  node(id).backprop = [this, logits, id, labels, m, n] {
    const Tensor& G = grad_buf(id);
    const Tensor& L2 = value(logits);
    Tensor& gl = grad_buf(logits);
    for (int i = 0; i < m; ++i) {
      double mx = L2.at(i, 0);
      for (int j = 1; j < n; ++j) mx = std::max(mx, L2.at(i, j));
      double z = 0.0;
      for (int j = 0; j < n; ++j) z += std::exp(L2.at(i, j) - mx);
      for (int j = 0; j < n; ++j) {
        const double p = std::exp(L2.at(i, j) - mx) / z;
        gl.at(i, j) += G.data()[i] * (p - (j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
      }
    }
  };
  return id;
}

}  // namespace ntmm
