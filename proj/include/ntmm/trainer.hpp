#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ntmm/adam.hpp"
#include "ntmm/dataset.hpp"
#include "ntmm/losses.hpp"
#include "ntmm/model.hpp"

namespace ntmm {

enum class Variant { kNone, kInsOnly, kCatOnly, kFull };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct GammaSchedule {
  double initial = 0.6;
  double final_value = 0.8;
  int switch_epoch = 15;  // global epoch index (warm-up epochs count)

  double at(int global_epoch) const { return global_epoch < switch_epoch ? initial : final_value; }
};

struct TrainConfig {
  int epochs = 40;
  int warmup_epochs = 5;
  int batch_size = 64;
  double lr = 5e-5;
  double lr_contrastive = -1.0;  // < 0 falls back to lr
  double tau1 = 1.0;
  double tau2 = 0.1;
  double eps_v = 0.5;
  double eps_a = 0.5;
  int similar_cap = 16;
  int sinkhorn_iterations = 3;
  double sinkhorn_reg = 0.05;
  SinkhornMode sinkhorn_mode = SinkhornMode::kSoft;
  int knn_k = 10;
  GammaSchedule gamma;
  std::uint64_t seed = 0;
  Variant variant = Variant::kFull;
  bool correction = true;

  double contrastive_lr() const { return lr_contrastive < 0.0 ? lr : lr_contrastive; }
  void validate() const;
};

/// One record per completed epoch. Fields that do not apply to an epoch
/// (for example corrected-label accuracy during warm-up) hold NaN and
/// serialize as empty CSV cells.
struct EpochRecord {
  int epoch = 0;           // global index, warm-up epochs included
  std::string phase;       // "warmup" or "main"
  double gamma = 0.0;
  double l_ins = 0.0, l_cat = 0.0, l_c = 0.0, l_s = 0.0;
  double ce_observed = 0.0, ce_corrected = 0.0;
  double train_top1 = 0.0;  // against observed (possibly noisy) labels
  double test_top1 = 0.0, test_top5 = 0.0;  // against true labels, clean split
  bool top5_degenerate = false;
  double corrected_label_acc = 0.0;  // corrected vs true labels
  double mean_omega_clean = 0.0, mean_omega_mismatched = 0.0;  // audio weights by flag
  double mean_ce_clean = 0.0, mean_ce_noisy = 0.0;  // train CE split by label-noise flag
};

struct TrainReport {
  std::vector<EpochRecord> epochs;

  // Per-sample diagnostics from the final completed epoch, train-split order.
  std::vector<double> omega_v, omega_a;
  std::vector<std::uint8_t> correspondence_clean;
  std::vector<double> per_sample_ce;
  std::vector<std::uint8_t> label_clean;  // observed == true
  std::vector<int> corrected_labels;      // empty when correction never ran
};

struct EvalResult {
  double top1 = 0.0;
  double top5 = 0.0;
  bool top5_degenerate = false;  // K <= 5 makes top-5 trivially 1
};

/// Clip-level style accuracy on a sample split against true labels.
EvalResult evaluate(const ModelState& model, const std::vector<MultimodalSample>& split);

/// Drives warm-up plus the two-phase iterative loop. Owns the model and both
/// optimizer states so ablations can snapshot/restore mid-training.
class Trainer {
 public:
  Trainer(ModelState model, TrainConfig config);

  /// Plain supervised cross-entropy on observed labels for warmup_epochs.
  /// Identical code path to run() with the contrastive phase and correction
  /// disabled and gamma pinned to 0.
  void warmup(const MultimodalDataset& dataset);

  /// The iterative loop: per epoch, refresh the feature cache and weights,
  /// contrastive phase, KNN rectification, supervised phase, evaluation.
  void run(const MultimodalDataset& dataset);

  ModelState& model() { return model_; }
  const ModelState& model() const { return model_; }
  const TrainReport& report() const { return report_; }
  int global_epoch() const { return global_epoch_; }
  void set_variant(Variant v) { cfg_.variant = v; }
  const TrainConfig& config() const { return cfg_; }

  /// Invoked after every completed epoch (checkpointing hooks and the like).
  void set_epoch_callback(std::function<void(const Trainer&)> cb) { epoch_callback_ = std::move(cb); }

 private:
  struct EpochCache {
    Tensor z_v, z_a;  // [N, d] common-space features
    CorrespondenceWeights omega;
  };

  EpochCache compute_cache(const MultimodalDataset& dataset) const;
  void train_epoch(const MultimodalDataset& dataset, Variant variant, bool correction, double gamma,
                   const std::string& phase);
  void contrastive_phase(const MultimodalDataset& dataset, const EpochCache& cache, Variant variant,
                         LossBreakdown& sums, int& batches, int& cat_batches);
  void supervised_phase(const MultimodalDataset& dataset, const std::vector<int>& corrected, double gamma,
                        LossBreakdown& sums, int& batches);
  void evaluate_epoch(const MultimodalDataset& dataset, const EpochCache* cache, const std::vector<int>* corrected,
                      const LossBreakdown& means, const std::string& phase, double gamma, bool cat_ran);

  ModelState model_;
  TrainConfig cfg_;
  Adam adam_contrastive_;
  Adam adam_supervised_;
  TrainReport report_;
  int global_epoch_ = 0;
  std::function<void(const Trainer&)> epoch_callback_;
};

// Spec-level conveniences -----------------------------------------------

ModelState warmup(ModelState model, const MultimodalDataset& dataset, const TrainConfig& config);
std::pair<ModelState, TrainReport> run(ModelState model, const MultimodalDataset& dataset, const TrainConfig& config);

/// Warm-up followed by the main loop, one merged report.
std::pair<ModelState, TrainReport> train_full(ModelState model, const MultimodalDataset& dataset,
                                              const TrainConfig& config);

/// Runs the four ablation variants from one shared warm-up snapshot, same
/// seed everywhere.
std::map<Variant, TrainReport> ablate(ModelState model, const MultimodalDataset& dataset, const TrainConfig& config);

}  // namespace ntmm
