#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ntmm::cli {

struct TrainOptions {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::string sweep;  // "", "gamma", "label-rate", "correspondence-rate"
  bool ablate = false;
  int checkpoint_every = 0;  // 0 disables per-epoch checkpoints
};

/// Generates a dataset per the config, applies the configured noise, writes
/// dataset.ntds, audit.json and the config copy into the output directory.
int cmd_generate(const std::filesystem::path& config_path, const std::optional<std::string>& out_dir);

/// Runs training (plain, sweep, or ablation) and writes reports, per-sample
/// diagnostics and the final checkpoint.
int cmd_train(const std::filesystem::path& config_path, const TrainOptions& options);

/// Merges completed run directories into comparison tables and plot data.
int cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::optional<std::string>& out_dir);

}  // namespace ntmm::cli
