#pragma once

#include <filesystem>
#include <string>

#include "ntmm/dataset.hpp"
#include "ntmm/model.hpp"
#include "ntmm/trainer.hpp"

namespace ntmm {

inline constexpr int kConfigFormatVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

/// Architecture knobs not implied by the generator or train sections.
/// Input dims and K come from the generator; the autoencoder width comes
/// from the batch size.
struct ModelConfig {
  int d = 32;
  int enc_hidden = 64;
  int clf_hidden = 64;
  int ae_hidden = 32;
  std::uint64_t init_seed = 7;
};

struct ExperimentConfig {
  std::string label = "run";
  GeneratorConfig generator;
  NoiseConfig noise;
  TrainConfig train;
  ModelConfig model;
  std::string dataset_path;  // produced by `generate`; required by plain `train`
  std::string out_dir = "runs/run";

  ModelDims model_dims() const;
  void validate() const;
};

/// JSON round trip. Parsing is strict: unknown keys and malformed values are
/// rejected so a typo cannot silently change an experiment.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_to_json(const ExperimentConfig& config);
void save_experiment_config(const ExperimentConfig& config, const std::filesystem::path& path);

/// FNV-1a hash of the canonical JSON form, as fixed-width hex.
std::string config_hash(const ExperimentConfig& config);

}  // namespace ntmm
