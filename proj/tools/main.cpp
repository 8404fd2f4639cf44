#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ntmm/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Noise-tolerant multimodal learning experiments on synthetic two-modality data"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;

  auto* gen = app.add_subcommand("generate", "Generate a dataset with controlled label/correspondence noise");
  gen->add_option("--config", config_path, "Experiment config (JSON)")->required();
  std::string gen_out;
  auto* gen_out_opt = gen->add_option("--out", gen_out, "Output directory (overrides config)");

  auto* train = app.add_subcommand("train", "Train on a generated dataset and emit reports");
  train->add_option("--config", config_path, "Experiment config (JSON)")->required();
  std::string train_out;
  auto* train_out_opt = train->add_option("--out", train_out, "Output directory (overrides config)");
  std::uint64_t seed = 0;
  auto* seed_opt = train->add_option("--seed", seed, "Override the run seeds");
  std::string sweep;
  train->add_option("--sweep", sweep, "Sweep: gamma | label-rate | correspondence-rate")
      ->check(CLI::IsMember({"gamma", "label-rate", "correspondence-rate"}));
  bool do_ablate = false;
  train->add_flag("--ablate", do_ablate, "Run the none/ins-only/cat-only/full ablation");
  std::string variant;
  train->add_option("--variant", variant, "Contrastive variant: none | ins-only | cat-only | full")
      ->check(CLI::IsMember({"none", "ins-only", "cat-only", "full"}));
  int checkpoint_every = 0;
  train->add_option("--checkpoint-every", checkpoint_every, "Save a checkpoint every N epochs (0 = final only)");

  auto* report = app.add_subcommand("report", "Merge run directories into comparison tables");
  std::vector<std::string> run_dirs;
  report->add_option("dirs", run_dirs, "Completed run directories")->required()->expected(-1);
  std::string report_out;
  auto* report_out_opt = report->add_option("--out", report_out, "Output directory (default report_out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      return ntmm::cli::cmd_generate(config_path, gen_out_opt->count() ? std::optional(gen_out) : std::nullopt);
    }
    if (train->parsed()) {
      ntmm::cli::TrainOptions opt;
      if (train_out_opt->count()) opt.out_dir = train_out;
      if (seed_opt->count()) opt.seed = seed;
      if (!variant.empty()) opt.variant = variant;
      opt.sweep = sweep;
      opt.ablate = do_ablate;
      opt.checkpoint_every = checkpoint_every;
      return ntmm::cli::cmd_train(config_path, opt);
    }
    if (report->parsed()) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      return ntmm::cli::cmd_report(dirs, report_out_opt->count() ? std::optional(report_out) : std::nullopt);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
