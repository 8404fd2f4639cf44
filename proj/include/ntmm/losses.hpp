#pragma once

#include <utility>
#include <vector>

#include "ntmm/model.hpp"
#include "ntmm/tape.hpp"
#include "ntmm/tensor.hpp"

namespace ntmm {

// ---------------------------------------------------------------------------
// Non-differentiated procedures. The trainer runs these outside the tape and
// feeds their outputs into the losses as constants.
// ---------------------------------------------------------------------------

/// Temperature-scaled cosine similarity: (1/tau1) * cos(a, b).
/// Rejects zero vectors.
double scaled_cosine(const std::vector<double>& a, const std::vector<double>& b, double tau1);

struct SimilarSets {
  std::vector<int> visual;  // J_i^v: selected by audio-side similarity
  std::vector<int> audio;   // J_i^a: selected by visual-side similarity
};

/// Similar-sample sets for sample i over a feature pool (rows of the [N,d]
/// matrices). The visual set keeps indices j != i whose *audio* similarity to
/// i exceeds eps_a, truncated to the `cap` highest by that gating similarity;
/// the audio set mirrors it with visual gating against eps_v.
SimilarSets similar_sets(const Tensor& features_v, const Tensor& features_a, int i, double eps_v, double eps_a,
                         int cap, double tau1);

struct CorrespondenceWeights {
  std::vector<double> visual;  // omega_i^v
  std::vector<double> audio;   // omega_i^a
};

/// Per-sample correspondence weights: omega_i^v averages the visual-side
/// similarity over J_i^v and clamps to [0,1]; an empty set yields 1 (no
/// evidence of mismatch). Mirrors for audio.
CorrespondenceWeights correspondence_weights(const Tensor& features_v, const Tensor& features_a,
                                             const std::vector<SimilarSets>& sets, double tau1);

/// Convenience: similar sets for every sample, then weights.
std::vector<SimilarSets> similar_sets_all(const Tensor& features_v, const Tensor& features_a, double eps_v,
                                          double eps_a, int cap, double tau1);

enum class SinkhornMode { kSoft, kHard };

struct AssignmentMatrix {
  Tensor q_v;  // [B, K]
  Tensor q_a;  // [B, K]
  SinkhornMode mode = SinkhornMode::kSoft;
};

/// Balanced cluster assignment for one modality. Starts from
/// exp(scores/reg) and alternates column rescaling (sums to B/K) with row
/// rescaling (sums to 1) for `iterations` rounds, ending on rows so each
/// target is a distribution. Hard mode takes the per-row argmax of the soft
/// result. Aborts on non-finite intermediates.
Tensor sinkhorn_assign(const Tensor& scores, int iterations, double reg, SinkhornMode mode = SinkhornMode::kSoft);

// ---------------------------------------------------------------------------
// Differentiable loss builders.
// ---------------------------------------------------------------------------

/// Cluster probabilities against a prototype bank: softmax over classes of
/// (1/tau2) <z_i/|z_i|, c_k>. Prototypes must already be unit-normalized.
Tape::NodeId cluster_probs(Tape& tape, Tape::NodeId features, Tape::NodeId prototypes, double tau2);

/// Raw prototype scores <z_i/|z_i|, c_k> used as Sinkhorn input (value-level,
/// never differentiated).
Tensor prototype_scores(const Tensor& features, const Tensor& prototypes);

struct BatchWeights {
  std::vector<double> visual;
  std::vector<double> audio;
};

/// Swapped-prediction instance loss: audio targets supervise visual
/// probabilities and vice versa, each term weighted by its correspondence
/// weight. Targets and weights are constants.
Tape::NodeId instance_loss(Tape& tape, Tape::NodeId probs_v, Tape::NodeId probs_a, const Tensor& q_v,
                           const Tensor& q_a, const BatchWeights& weights);

/// Category representations: per-modality [B, K] softmax responses against
/// the category prototypes, transposed to [K, B] so row k is class k's
/// response signature across the batch.
Tape::NodeId category_representations(Tape& tape, Tape::NodeId features, Tape::NodeId category_prototypes,
                                      double tau2, int expected_batch);

struct CategoryLossTerms {
  Tape::NodeId l_rv, l_ra;  // intra-modal: original vs reconstructed
  Tape::NodeId l_cv, l_ca;  // inter-modal: reconstructed vs reconstructed
  Tape::NodeId total;       // (l_cv + l_ca + l_rv + l_ra) / 4
};

/// Category-level contrastive loss over original and reconstructed category
/// representations. Every similarity is the temperature-scaled cosine; each
/// row's denominator spans the reconstructed representations of both
/// modalities.
CategoryLossTerms category_loss(Tape& tape, Tape::NodeId P_v, Tape::NodeId P_a, Tape::NodeId R_v, Tape::NodeId R_a,
                                double tau1);

/// L_c = L_ins + L_cat.
Tape::NodeId contrastive_loss(Tape& tape, Tape::NodeId l_ins, Tape::NodeId l_cat);

/// Hybrid supervised loss (1-gamma)*CE(observed) + gamma*CE(corrected) with
/// mean softmax cross-entropy. Terms with a zero coefficient are skipped so
/// the extremes are bit-identical to the single-term losses.
Tape::NodeId hybrid_loss(Tape& tape, Tape::NodeId logits, const std::vector<int>& observed,
                         const std::vector<int>& corrected, double gamma);

struct LossBreakdown {
  double l_ins = 0.0;
  double l_rv = 0.0, l_ra = 0.0, l_cv = 0.0, l_ca = 0.0;
  double l_cat = 0.0;
  double l_c = 0.0;
  double l_s = 0.0;
  double ce_observed = 0.0;
  double ce_corrected = 0.0;
};

}  // namespace ntmm
