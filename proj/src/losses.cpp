#include "ntmm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ntmm {

namespace {

double row_norm(const Tensor& m, int i) {
  double s = 0.0;
  for (int j = 0; j < m.cols(); ++j) s += m.at(i, j) * m.at(i, j);
  return std::sqrt(s);
}

// Scaled cosine of two rows given precomputed norms.
double row_cosine(const Tensor& m, int i, int j, const std::vector<double>& norms, double tau1) {
  double dot = 0.0;
  for (int c = 0; c < m.cols(); ++c) dot += m.at(i, c) * m.at(j, c);
  return dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)] * tau1);
}

std::vector<double> all_row_norms(const Tensor& m, const char* what) {
  std::vector<double> norms(static_cast<std::size_t>(m.rows()));
  for (int i = 0; i < m.rows(); ++i) {
    norms[static_cast<std::size_t>(i)] = row_norm(m, i);
    if (norms[static_cast<std::size_t>(i)] < 1e-300)
      throw std::domain_error(std::string(what) + ": zero feature vector at row " + std::to_string(i));
  }
  return norms;
}

// Keep indices with gate > eps, truncated to the `cap` largest gates.
// Ties break toward the lower index so the selection is total.
std::vector<int> gated_top(const std::vector<double>& gate, int self, double eps, int cap) {
  std::vector<int> idx;
  for (int j = 0; j < static_cast<int>(gate.size()); ++j) {
    if (j == self) continue;
    if (gate[static_cast<std::size_t>(j)] > eps) idx.push_back(j);
  }
  if (cap >= 0 && static_cast<int>(idx.size()) > cap) {
    std::partial_sort(idx.begin(), idx.begin() + cap, idx.end(), [&](int a, int b) {
      if (gate[static_cast<std::size_t>(a)] != gate[static_cast<std::size_t>(b)])
        return gate[static_cast<std::size_t>(a)] > gate[static_cast<std::size_t>(b)];
      return a < b;
    });
    idx.resize(static_cast<std::size_t>(cap));
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

}  // namespace

double scaled_cosine(const std::vector<double>& a, const std::vector<double>& b, double tau1) {
  if (a.size() != b.size()) throw std::invalid_argument("scaled_cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na < 1e-300 || nb < 1e-300) throw std::domain_error("scaled_cosine: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb) * tau1);
}

SimilarSets similar_sets(const Tensor& features_v, const Tensor& features_a, int i, double eps_v, double eps_a,
                         int cap, double tau1) {
  const int n = features_v.rows();
  if (features_a.rows() != n) throw std::invalid_argument("similar_sets: modality row counts disagree");
  if (i < 0 || i >= n) throw std::invalid_argument("similar_sets: index out of range");
  const auto norms_v = all_row_norms(features_v, "similar_sets(visual)");
  const auto norms_a = all_row_norms(features_a, "similar_sets(audio)");
  std::vector<double> sim_a(static_cast<std::size_t>(n)), sim_v(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    sim_a[static_cast<std::size_t>(j)] = row_cosine(features_a, i, j, norms_a, tau1);
    sim_v[static_cast<std::size_t>(j)] = row_cosine(features_v, i, j, norms_v, tau1);
  }
  SimilarSets sets;
  sets.visual = gated_top(sim_a, i, eps_a, cap);
  sets.audio = gated_top(sim_v, i, eps_v, cap);
  return sets;
}

namespace {

// Rows scaled to unit norm and 1/tau1, contiguous, so pairwise scaled
// cosines become plain dot products.
std::vector<double> unit_rows_scaled(const Tensor& m, double tau1, const char* what) {
  const int n = m.rows(), d = m.cols();
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  const double inv_tau = 1.0 / std::sqrt(tau1);
  for (int i = 0; i < n; ++i) {
    const double* src = m.data() + static_cast<std::size_t>(i) * d;
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += src[c] * src[c];
    const double norm = std::sqrt(s);
    if (norm < 1e-300) throw std::domain_error(std::string(what) + ": zero feature vector at row " + std::to_string(i));
    double* dst = out.data() + static_cast<std::size_t>(i) * d;
    for (int c = 0; c < d; ++c) dst[c] = src[c] / norm * inv_tau;
  }
  return out;
}

void dot_row_all(const std::vector<double>& rows, int n, int d, int i, std::vector<double>& sims) {
  const double* ri = rows.data() + static_cast<std::size_t>(i) * d;
  for (int j = 0; j < n; ++j) {
    const double* rj = rows.data() + static_cast<std::size_t>(j) * d;
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += ri[c] * rj[c];
    sims[static_cast<std::size_t>(j)] = s;
  }
}

}  // namespace

std::vector<SimilarSets> similar_sets_all(const Tensor& features_v, const Tensor& features_a, double eps_v,
                                          double eps_a, int cap, double tau1) {
  const int n = features_v.rows();
  if (features_a.rows() != n) throw std::invalid_argument("similar_sets: modality row counts disagree");
  const int dv = features_v.cols(), da = features_a.cols();
  const auto unit_v = unit_rows_scaled(features_v, tau1, "similar_sets(visual)");
  const auto unit_a = unit_rows_scaled(features_a, tau1, "similar_sets(audio)");
  std::vector<SimilarSets> out(static_cast<std::size_t>(n));
  std::vector<double> sim_a(static_cast<std::size_t>(n)), sim_v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    dot_row_all(unit_a, n, da, i, sim_a);
    dot_row_all(unit_v, n, dv, i, sim_v);
    out[static_cast<std::size_t>(i)].visual = gated_top(sim_a, i, eps_a, cap);
    out[static_cast<std::size_t>(i)].audio = gated_top(sim_v, i, eps_v, cap);
  }
  return out;
}

CorrespondenceWeights correspondence_weights(const Tensor& features_v, const Tensor& features_a,
                                             const std::vector<SimilarSets>& sets, double tau1) {
  const int n = features_v.rows();
  if (static_cast<int>(sets.size()) != n) throw std::invalid_argument("correspondence_weights: set count mismatch");
  const int dv = features_v.cols(), da = features_a.cols();
  const auto unit_v = unit_rows_scaled(features_v, tau1, "correspondence_weights(visual)");
  const auto unit_a = unit_rows_scaled(features_a, tau1, "correspondence_weights(audio)");
  CorrespondenceWeights w;
  w.visual.resize(static_cast<std::size_t>(n));
  w.audio.resize(static_cast<std::size_t>(n));
  auto avg = [](const std::vector<int>& members, const std::vector<double>& rows, int d, int i) {
    if (members.empty()) return 1.0;  // no neighbors, no evidence of mismatch
    const double* ri = rows.data() + static_cast<std::size_t>(i) * d;
    double s = 0.0;
    for (int j : members) {
      const double* rj = rows.data() + static_cast<std::size_t>(j) * d;
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += ri[c] * rj[c];
      s += dot;
    }
    return std::clamp(s / static_cast<double>(members.size()), 0.0, 1.0);
  };
  for (int i = 0; i < n; ++i) {
    const auto& set = sets[static_cast<std::size_t>(i)];
    w.visual[static_cast<std::size_t>(i)] = avg(set.visual, unit_v, dv, i);
    w.audio[static_cast<std::size_t>(i)] = avg(set.audio, unit_a, da, i);
  }
  return w;
}

Tensor sinkhorn_assign(const Tensor& scores, int iterations, double reg, SinkhornMode mode) {
  if (scores.rank() != 2) throw std::invalid_argument("sinkhorn_assign: scores must be rank-2");
  if (!scores.all_finite()) throw std::runtime_error("sinkhorn_assign: non-finite scores");
  if (reg <= 0.0) throw std::invalid_argument("sinkhorn_assign: reg must be positive");
  if (iterations < 0) throw std::invalid_argument("sinkhorn_assign: negative iteration count");
  const int b = scores.rows(), k = scores.cols();
  Tensor q({b, k});
  // Row-max shift keeps exp() in range; row rescaling absorbs the shift.
  for (int i = 0; i < b; ++i) {
    double mx = scores.at(i, 0);
    for (int j = 1; j < k; ++j) mx = std::max(mx, scores.at(i, j));
    for (int j = 0; j < k; ++j) q.at(i, j) = std::exp((scores.at(i, j) - mx) / reg);
  }
  const double col_target = static_cast<double>(b) / static_cast<double>(k);
  auto rescale_rows = [&] {
    for (int i = 0; i < b; ++i) {
      double s = 0.0;
      for (int j = 0; j < k; ++j) s += q.at(i, j);
      if (!std::isfinite(s) || s <= 0.0)
        throw std::runtime_error("sinkhorn_assign: degenerate row sum at row " + std::to_string(i));
      for (int j = 0; j < k; ++j) q.at(i, j) /= s;
    }
  };
  auto rescale_cols = [&] {
    for (int j = 0; j < k; ++j) {
      double s = 0.0;
      for (int i = 0; i < b; ++i) s += q.at(i, j);
      if (!std::isfinite(s) || s <= 0.0)
        throw std::runtime_error("sinkhorn_assign: degenerate column sum at column " + std::to_string(j));
      const double f = col_target / s;
      for (int i = 0; i < b; ++i) q.at(i, j) *= f;
    }
  };
  rescale_rows();
  for (int it = 0; it < iterations; ++it) {
    rescale_cols();
    rescale_rows();
  }
  if (!q.all_finite()) throw std::runtime_error("sinkhorn_assign: non-finite assignment");
  if (mode == SinkhornMode::kHard) {
    Tensor hard({b, k});
    for (int i = 0; i < b; ++i) {
      int best = 0;
      for (int j = 1; j < k; ++j)
        if (q.at(i, j) > q.at(i, best)) best = j;
      hard.at(i, best) = 1.0;
    }
    return hard;
  }
  return q;
}

Tape::NodeId cluster_probs(Tape& tape, Tape::NodeId features, Tape::NodeId prototypes, double tau2) {
  Tape::NodeId z = tape.rownorm(features);
  Tape::NodeId scores = tape.matmul_nt(z, prototypes);
  return tape.softmax_rows(tape.scale(scores, 1.0 / tau2));
}

Tensor prototype_scores(const Tensor& features, const Tensor& prototypes) {
  Tape tape;
  Tape::NodeId z = tape.rownorm(tape.constant(features));
  return tape.value(tape.matmul_nt(z, tape.constant(prototypes)));
}

Tape::NodeId instance_loss(Tape& tape, Tape::NodeId probs_v, Tape::NodeId probs_a, const Tensor& q_v,
                           const Tensor& q_a, const BatchWeights& weights) {
  const Tensor& pv = tape.value(probs_v);
  const int b = pv.rows();
  if (static_cast<int>(weights.visual.size()) != b || static_cast<int>(weights.audio.size()) != b)
    throw std::invalid_argument("instance_loss: weight count does not match batch size");
  // Swapped prediction: audio assignments supervise visual probabilities.
  Tape::NodeId ce_v = tape.ce_rows_const(probs_v, q_a);
  Tape::NodeId ce_a = tape.ce_rows_const(probs_a, q_v);
  Tensor wv({b}), wa({b});
  for (int i = 0; i < b; ++i) {
    wv.data()[i] = weights.visual[static_cast<std::size_t>(i)];
    wa.data()[i] = weights.audio[static_cast<std::size_t>(i)];
  }
  Tape::NodeId total = tape.add(tape.dot_const(ce_v, wv), tape.dot_const(ce_a, wa));
  return tape.scale(total, 1.0 / static_cast<double>(b));
}

Tape::NodeId category_representations(Tape& tape, Tape::NodeId features, Tape::NodeId category_prototypes,
                                      double tau2, int expected_batch) {
  const Tensor& f = tape.value(features);
  if (f.rows() != expected_batch) {
    throw std::invalid_argument("category_representations: batch size " + std::to_string(f.rows()) +
                                " does not match configured width " + std::to_string(expected_batch) +
                                " (partial batches skip the category loss)");
  }
  return tape.transpose(cluster_probs(tape, features, category_prototypes, tau2));
}

namespace {

// -(1/K) sum_i log( exp(pos_ii) / sum_j [exp(S1_ij) + exp(S2_ij)] ) where the
// positive sits on the diagonal of `pos_src`.
Tape::NodeId nce_term(Tape& tape, Tape::NodeId pos_src, Tape::NodeId denom_a, Tape::NodeId denom_b) {
  Tape::NodeId lse = tape.logsumexp_rows(tape.concat_cols(denom_a, denom_b));
  return tape.mean(tape.sub(lse, tape.diag(pos_src)));
}

}  // namespace

CategoryLossTerms category_loss(Tape& tape, Tape::NodeId P_v, Tape::NodeId P_a, Tape::NodeId R_v, Tape::NodeId R_a,
                                double tau1) {
  const Tensor& pv = tape.value(P_v);
  const Tensor& pa = tape.value(P_a);
  const Tensor& rv = tape.value(R_v);
  const Tensor& ra = tape.value(R_a);
  if (!pv.same_shape(pa) || !pv.same_shape(rv) || !pv.same_shape(ra))
    throw std::invalid_argument("category_loss: representation shapes disagree");

  Tape::NodeId nv = tape.rownorm(P_v);
  Tape::NodeId na = tape.rownorm(P_a);
  Tape::NodeId nrv = tape.rownorm(R_v);
  Tape::NodeId nra = tape.rownorm(R_a);
  auto sim = [&](Tape::NodeId a, Tape::NodeId b) { return tape.scale(tape.matmul_nt(a, b), 1.0 / tau1); };
  Tape::NodeId s_v_rv = sim(nv, nrv);
  Tape::NodeId s_v_ra = sim(nv, nra);
  Tape::NodeId s_a_ra = sim(na, nra);
  Tape::NodeId s_a_rv = sim(na, nrv);
  Tape::NodeId s_rv_rv = sim(nrv, nrv);
  Tape::NodeId s_rv_ra = sim(nrv, nra);
  Tape::NodeId s_ra_ra = sim(nra, nra);
  Tape::NodeId s_ra_rv = sim(nra, nrv);

  CategoryLossTerms t{};
  // Intra-modal: original representation vs its own reconstruction.
  t.l_rv = nce_term(tape, s_v_rv, s_v_rv, s_v_ra);
  t.l_ra = nce_term(tape, s_a_ra, s_a_ra, s_a_rv);
  // Inter-modal: the two reconstructions of the same class.
  t.l_cv = nce_term(tape, s_rv_ra, s_rv_rv, s_rv_ra);
  t.l_ca = nce_term(tape, s_ra_rv, s_ra_ra, s_ra_rv);
  t.total = tape.scale(tape.add(tape.add(t.l_cv, t.l_ca), tape.add(t.l_rv, t.l_ra)), 0.25);
  return t;
}

Tape::NodeId contrastive_loss(Tape& tape, Tape::NodeId l_ins, Tape::NodeId l_cat) {
  return tape.add(l_ins, l_cat);
}

Tape::NodeId hybrid_loss(Tape& tape, Tape::NodeId logits, const std::vector<int>& observed,
                         const std::vector<int>& corrected, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("hybrid_loss: gamma outside [0,1]");
  if (gamma == 0.0) return tape.mean(tape.ce_rows_labels(logits, observed));
  if (gamma == 1.0) return tape.mean(tape.ce_rows_labels(logits, corrected));
  Tape::NodeId ce_obs = tape.mean(tape.ce_rows_labels(logits, observed));
  Tape::NodeId ce_cor = tape.mean(tape.ce_rows_labels(logits, corrected));
  return tape.add(tape.scale(ce_obs, 1.0 - gamma), tape.scale(ce_cor, gamma));
}

}  // namespace ntmm
