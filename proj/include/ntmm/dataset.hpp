#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ntmm/tensor.hpp"

namespace ntmm {

struct MultimodalSample {
  std::vector<double> visual;
  std::vector<double> audio;
  int true_label = 0;
  int observed_label = 0;
  bool correspondence_clean = true;
  std::int64_t id = 0;
};

enum class LabelNoiseMode { kNone, kSymmetric, kAsymmetric };

std::string to_string(LabelNoiseMode mode);
LabelNoiseMode label_noise_mode_from_string(const std::string& s);

struct NoiseConfig {
  LabelNoiseMode label_mode = LabelNoiseMode::kNone;
  double label_rate = 0.0;
  double correspondence_rate = 0.0;
  std::uint64_t seed = 0;
  /// Whether a sample may receive both a flipped label and mismatched audio
  /// (independent draws). The two injections never coordinate either way;
  /// this flag only forces disjoint selections when false.
  bool allow_overlap = true;

  void validate() const;
};

struct GeneratorConfig {
  int K = 10;
  int per_class = 200;
  int d_v = 48;
  int d_a = 32;
  double class_separation = 4.0;     // distance between class means, in within-class std units
  double modality_correlation = 0.7; // shared fraction of the per-sample latent variance
  std::uint64_t seed = 1;

  void validate() const;
};

struct MultimodalDataset {
  int K = 0;
  int d_v = 0;
  int d_a = 0;
  bool label_noise_applied = false;
  bool correspondence_noise_applied = false;
  std::vector<MultimodalSample> train;
  std::vector<MultimodalSample> test;

  std::size_t train_size() const { return train.size(); }
};

/// Draws class-structured two-modality data. Class means sit pairwise
/// `class_separation` apart (within-class std 1) in a K-dim latent space;
/// each modality observes the latent through a fixed seeded linear map plus
/// private noise. The test split is clean and drawn from the same
/// distribution with per_class/4 samples per class (at least 1).
MultimodalDataset generate(const GeneratorConfig& config);

struct LabelFlip {
  std::int64_t sample_id;
  int old_label;
  int new_label;
};

/// Flips observed labels on the train split: exactly round(rate*N) samples
/// chosen without replacement. Symmetric draws uniformly among the other K-1
/// classes; asymmetric maps class k to (k+1) mod K. Rejects double injection.
std::vector<LabelFlip> inject_label_noise(MultimodalDataset& dataset, LabelNoiseMode mode, double rate,
                                          std::uint64_t seed);

struct AudioSwap {
  std::int64_t sample_id;
  std::int64_t donor_id;
};

/// Replaces audio on exactly round(rate*N) train samples with the
/// (pre-injection) audio of a donor from a different true class, clearing
/// their correspondence_clean flag. `forbidden` excludes sample indices from
/// selection (used when label/correspondence overlap is disallowed).
std::vector<AudioSwap> inject_correspondence_noise(MultimodalDataset& dataset, double rate, std::uint64_t seed,
                                                   const std::vector<std::int64_t>& forbidden = {});

/// Applies a full NoiseConfig to the train split (labels first, then
/// correspondence). Returns both injection logs.
struct NoiseInjectionLog {
  std::vector<LabelFlip> label_flips;
  std::vector<AudioSwap> audio_swaps;
};
NoiseInjectionLog apply_noise(MultimodalDataset& dataset, const NoiseConfig& config);

struct NoiseAudit {
  double achieved_label_rate = 0.0;
  double achieved_correspondence_rate = 0.0;
  std::int64_t label_flips = 0;
  std::int64_t audio_swaps = 0;
  /// flip_histogram[{from,to}] = count of observed-label flips from->to.
  std::map<std::pair<int, int>, std::int64_t> flip_histogram;
};

/// Post-hoc audit by scanning the train split (independent of injection
/// bookkeeping).
NoiseAudit audit_noise(const MultimodalDataset& dataset);

/// Checksummed binary round trip; bit-exact.
void save(const MultimodalDataset& dataset, const std::filesystem::path& path);
MultimodalDataset load(const std::filesystem::path& path);

// Column-stacked views used by the trainer.
Tensor visual_matrix(const std::vector<MultimodalSample>& samples);
Tensor audio_matrix(const std::vector<MultimodalSample>& samples);
std::vector<int> observed_labels(const std::vector<MultimodalSample>& samples);
std::vector<int> true_labels(const std::vector<MultimodalSample>& samples);

}  // namespace ntmm
