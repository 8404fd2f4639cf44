#include "ntmm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

#include "ntmm/correction.hpp"
#include "ntmm/experiment.hpp"
#include "ntmm/report_io.hpp"
#include "ntmm/serialize.hpp"

namespace ntmm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
}

void copy_config_verbatim(const fs::path& config_path, const fs::path& out_dir) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot reopen config '" + config_path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  write_text(out_dir / "config.input.json", bytes);
}

void apply_overrides(ExperimentConfig& cfg, const TrainOptions& opt) {
  if (opt.out_dir) cfg.out_dir = *opt.out_dir;
  if (opt.variant) cfg.train.variant = variant_from_string(*opt.variant);
  if (opt.seed) {
    cfg.train.seed = *opt.seed;
    cfg.noise.seed = *opt.seed + 1;
    cfg.generator.seed = *opt.seed + 2;
  }
}

MultimodalDataset load_dataset_for(const ExperimentConfig& cfg) {
  if (cfg.dataset_path.empty())
    throw std::runtime_error("train: config has no dataset_path; run `generate` first");
  if (!fs::exists(cfg.dataset_path))
    throw std::runtime_error("train: dataset '" + cfg.dataset_path + "' does not exist; run `generate` first");
  return load(cfg.dataset_path);
}

struct RunOutputs {
  const ExperimentConfig& cfg;
  fs::path dir;
  std::string hash;
};

void write_run_outputs(const RunOutputs& out, const ModelState& model, const TrainReport& report) {
  fs::create_directories(out.dir);
  save_experiment_config(out.cfg, out.dir / "config.json");
  write_report_csv(report, out.dir / "report.csv", out.hash);
  write_report_jsonl(report, out.dir / "report.jsonl", out.hash);
  write_omega_csv(report, out.dir / "omega.csv", out.hash);
  write_ce_csv(report, out.dir / "ce.csv", out.hash);
  write_schema_json(out.dir / "schema.json");
  model.save(out.dir / "checkpoint.ntck");
}

TrainReport execute_run(const ExperimentConfig& cfg, const MultimodalDataset& ds, const fs::path& dir,
                        int checkpoint_every) {
  ModelState model = ModelState::init(cfg.model_dims(), cfg.model.init_seed);
  Trainer trainer(std::move(model), cfg.train);
  if (checkpoint_every > 0) {
    const fs::path ckpt_dir = dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    trainer.set_epoch_callback([ckpt_dir, checkpoint_every](const Trainer& t) {
      if (t.global_epoch() % checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04d.ntck", t.global_epoch());
        t.model().save(ckpt_dir / name);
      }
    });
  }
  trainer.warmup(ds);
  trainer.run(ds);
  write_run_outputs({cfg, dir, config_hash(cfg)}, trainer.model(), trainer.report());
  return trainer.report();
}

json audit_to_json(const ExperimentConfig& cfg, const NoiseAudit& audit) {
  json flips = json::array();
  for (const auto& [pair, count] : audit.flip_histogram) {
    flips.push_back({{"from", pair.first}, {"to", pair.second}, {"count", count}});
  }
  return json{{"schema_version", kReportSchemaVersion},
              {"config_hash", config_hash(cfg)},
              {"requested_label_rate", cfg.noise.label_rate},
              {"achieved_label_rate", audit.achieved_label_rate},
              {"label_flips", audit.label_flips},
              {"requested_correspondence_rate", cfg.noise.correspondence_rate},
              {"achieved_correspondence_rate", audit.achieved_correspondence_rate},
              {"audio_swaps", audit.audio_swaps},
              {"flip_histogram", flips}};
}

double final_column(const ParsedCsv& csv, const std::string& name) {
  const int col = csv.column(name);
  if (col < 0 || csv.rows.empty()) return std::nan("");
  const std::string& cell = csv.rows.back()[static_cast<std::size_t>(col)];
  return cell.empty() ? std::nan("") : std::stod(cell);
}

}  // namespace

int cmd_generate(const fs::path& config_path, const std::optional<std::string>& out_dir) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (out_dir) cfg.out_dir = *out_dir;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  MultimodalDataset ds = generate(cfg.generator);
  apply_noise(ds, cfg.noise);
  const fs::path data_path = dir / "dataset.ntds";
  save(ds, data_path);
  cfg.dataset_path = data_path.string();

  const NoiseAudit audit = audit_noise(ds);
  write_text(dir / "audit.json", audit_to_json(cfg, audit).dump(2) + "\n");
  copy_config_verbatim(config_path, dir);
  save_experiment_config(cfg, dir / "config.json");

  std::cout << "generated " << ds.train.size() << " train / " << ds.test.size() << " test samples (K=" << ds.K
            << ") -> " << data_path.string() << "\n"
            << "label noise: requested " << cfg.noise.label_rate << ", achieved " << audit.achieved_label_rate << "\n"
            << "correspondence noise: requested " << cfg.noise.correspondence_rate << ", achieved "
            << audit.achieved_correspondence_rate << "\n";
  return 0;
}

int cmd_train(const fs::path& config_path, const TrainOptions& options) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  apply_overrides(cfg, options);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  copy_config_verbatim(config_path, dir);

  if (options.ablate) {
    const MultimodalDataset ds = load_dataset_for(cfg);
    ModelState model = ModelState::init(cfg.model_dims(), cfg.model.init_seed);
    const auto reports = ablate(std::move(model), ds, cfg.train);
    std::ofstream table(dir / "ablation.csv");
    table << csv_header_comment(config_hash(cfg)) << "variant,final_test_top1,final_test_top5,final_train_top1\n";
    for (const auto& [variant, report] : reports) {
      ExperimentConfig sub = cfg;
      sub.train.variant = variant;
      sub.label = cfg.label + "-" + to_string(variant);
      const fs::path sub_dir = dir / ("variant_" + to_string(variant));
      fs::create_directories(sub_dir);
      save_experiment_config(sub, sub_dir / "config.json");
      write_report_csv(report, sub_dir / "report.csv", config_hash(sub));
      write_report_jsonl(report, sub_dir / "report.jsonl", config_hash(sub));
      write_omega_csv(report, sub_dir / "omega.csv", config_hash(sub));
      write_ce_csv(report, sub_dir / "ce.csv", config_hash(sub));
      write_schema_json(sub_dir / "schema.json");
      const EpochRecord& last = report.epochs.back();
      table << to_string(variant) << ',' << format_double(last.test_top1) << ',' << format_double(last.test_top5)
            << ',' << format_double(last.train_top1) << "\n";
    }
    std::cout << "ablation complete; table at " << (dir / "ablation.csv").string() << "\n";
    return 0;
  }

  if (options.sweep == "gamma") {
    const MultimodalDataset ds = load_dataset_for(cfg);
    std::ofstream table(dir / "sweep_summary.csv");
    table << csv_header_comment(config_hash(cfg)) << "gamma,final_test_top1,final_test_top5,corrected_label_acc\n";
    for (int i = 0; i <= 10; ++i) {
      const double gamma = 0.1 * i;
      ExperimentConfig sub = cfg;
      sub.train.gamma.initial = gamma;
      sub.train.gamma.final_value = gamma;
      char tag[24];
      std::snprintf(tag, sizeof tag, "gamma_%.1f", gamma);
      sub.label = cfg.label + "-" + tag;
      sub.out_dir = (dir / tag).string();
      const TrainReport report = execute_run(sub, ds, dir / tag, options.checkpoint_every);
      const EpochRecord& last = report.epochs.back();
      table << format_double(gamma) << ',' << format_double(last.test_top1) << ',' << format_double(last.test_top5)
            << ',' << format_double(last.corrected_label_acc) << "\n";
    }
    std::cout << "gamma sweep complete; table at " << (dir / "sweep_summary.csv").string() << "\n";
    return 0;
  }

  if (options.sweep == "label-rate" || options.sweep == "correspondence-rate") {
    const bool label_sweep = options.sweep == "label-rate";
    const std::vector<double> rates =
        label_sweep ? std::vector<double>{0.2, 0.4, 0.6, 0.8} : std::vector<double>{0.1, 0.2, 0.3, 0.4};
    std::ofstream table(dir / "sweep_summary.csv");
    table << csv_header_comment(config_hash(cfg))
          << (label_sweep ? "label_rate" : "correspondence_rate")
          << ",final_test_top1,final_test_top5,corrected_label_acc\n";
    for (double rate : rates) {
      ExperimentConfig sub = cfg;
      if (label_sweep)
        sub.noise.label_rate = rate;
      else
        sub.noise.correspondence_rate = rate;
      char tag[40];
      std::snprintf(tag, sizeof tag, "%s_%.1f", label_sweep ? "label" : "corr", rate);
      sub.label = cfg.label + "-" + tag;
      sub.out_dir = (dir / tag).string();
      // Noise-rate sweeps rebuild the dataset per point from the generator
      // config; a saved dataset already has its noise baked in.
      MultimodalDataset ds = generate(sub.generator);
      apply_noise(ds, sub.noise);
      fs::create_directories(dir / tag);
      write_text(dir / tag / "audit.json", audit_to_json(sub, audit_noise(ds)).dump(2) + "\n");
      const TrainReport report = execute_run(sub, ds, dir / tag, options.checkpoint_every);
      const EpochRecord& last = report.epochs.back();
      table << format_double(rate) << ',' << format_double(last.test_top1) << ',' << format_double(last.test_top5)
            << ',' << format_double(last.corrected_label_acc) << "\n";
    }
    std::cout << options.sweep << " sweep complete; table at " << (dir / "sweep_summary.csv").string() << "\n";
    return 0;
  }

  if (!options.sweep.empty()) throw std::invalid_argument("train: unknown sweep '" + options.sweep + "'");

  const MultimodalDataset ds = load_dataset_for(cfg);
  const TrainReport report = execute_run(cfg, ds, dir, options.checkpoint_every);
  const EpochRecord& last = report.epochs.back();
  std::cout << "run '" << cfg.label << "' finished: test top-1 " << format_double(last.test_top1) << ", top-5 "
            << format_double(last.test_top5) << " after " << report.epochs.size() << " epochs\n";
  return 0;
}

int cmd_report(const std::vector<fs::path>& run_dirs, const std::optional<std::string>& out_dir) {
  if (run_dirs.empty()) throw std::invalid_argument("report: no run directories given");
  const fs::path dir(out_dir.value_or("report_out"));
  fs::create_directories(dir);

  struct Run {
    std::string label, variant, label_mode;
    double label_rate = 0.0, correspondence_rate = 0.0;
    std::uint64_t seed = 0;
    std::string hash;
    ParsedCsv report;
    fs::path path;
  };
  std::vector<Run> runs;
  int schema = -1;
  for (const fs::path& rd : run_dirs) {
    Run run;
    run.path = rd;
    const ExperimentConfig cfg = load_experiment_config(rd / "config.json");
    run.label = cfg.label;
    run.variant = to_string(cfg.train.variant);
    run.label_mode = to_string(cfg.noise.label_mode);
    run.label_rate = cfg.noise.label_rate;
    run.correspondence_rate = cfg.noise.correspondence_rate;
    run.seed = cfg.train.seed;
    run.hash = config_hash(cfg);
    run.report = read_csv(rd / "report.csv");
    if (run.report.rows.empty()) throw std::runtime_error("report: '" + rd.string() + "' has an empty report.csv");
    if (schema < 0) schema = run.report.schema_version;
    if (run.report.schema_version != schema) {
      throw std::runtime_error("report: schema version mismatch: '" + rd.string() + "' has version " +
                               std::to_string(run.report.schema_version) + ", expected " + std::to_string(schema));
    }
    runs.push_back(std::move(run));
  }

  std::uint64_t merged = 0xcbf29ce484222325ULL;
  for (const Run& r : runs) merged = fnv1a64_str(r.hash + std::to_string(merged));
  char merged_hex[17];
  std::snprintf(merged_hex, sizeof merged_hex, "%016llx", static_cast<unsigned long long>(merged));
  const std::string comment = csv_header_comment(merged_hex);

  {
    std::ofstream f(dir / "summary.csv");
    f << comment
      << "label,variant,label_mode,label_rate,correspondence_rate,seed,final_test_top1,final_test_top5,"
         "final_train_top1,final_corrected_label_acc,config_hash\n";
    for (const Run& r : runs) {
      f << r.label << ',' << r.variant << ',' << r.label_mode << ',' << format_double(r.label_rate) << ','
        << format_double(r.correspondence_rate) << ',' << r.seed << ',' << format_double(final_column(r.report, "test_top1"))
        << ',' << format_double(final_column(r.report, "test_top5")) << ','
        << format_double(final_column(r.report, "train_top1")) << ','
        << format_double(final_column(r.report, "corrected_label_acc")) << ',' << r.hash << "\n";
    }
  }

  {
    // Noise-rate x method grid, aggregated over seeds.
    struct Key {
      std::string variant, label_mode;
      double label_rate, correspondence_rate;
      bool operator<(const Key& o) const {
        return std::tie(variant, label_mode, label_rate, correspondence_rate) <
               std::tie(o.variant, o.label_mode, o.label_rate, o.correspondence_rate);
      }
    };
    std::map<Key, std::vector<double>> groups;
    for (const Run& r : runs)
      groups[{r.variant, r.label_mode, r.label_rate, r.correspondence_rate}].push_back(
          final_column(r.report, "test_top1"));
    std::ofstream f(dir / "grid.csv");
    f << comment << "variant,label_mode,label_rate,correspondence_rate,runs,test_top1_mean,test_top1_spread\n";
    for (const auto& [key, values] : groups) {
      double sum = 0.0, lo = values[0], hi = values[0];
      for (double v : values) {
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      f << key.variant << ',' << key.label_mode << ',' << format_double(key.label_rate) << ','
        << format_double(key.correspondence_rate) << ',' << values.size() << ','
        << format_double(sum / static_cast<double>(values.size())) << ',' << format_double((hi - lo) / 2.0) << "\n";
    }
  }

  {
    std::ofstream f(dir / "epoch_series.csv");
    f << comment << "label,epoch,phase,gamma,train_top1,test_top1,test_top5\n";
    for (const Run& r : runs) {
      const int c_epoch = r.report.column("epoch");
      const int c_phase = r.report.column("phase");
      const int c_gamma = r.report.column("gamma");
      const int c_train = r.report.column("train_top1");
      const int c_test1 = r.report.column("test_top1");
      const int c_test5 = r.report.column("test_top5");
      for (const auto& row : r.report.rows) {
        f << r.label << ',' << row[static_cast<std::size_t>(c_epoch)] << ',' << row[static_cast<std::size_t>(c_phase)]
          << ',' << row[static_cast<std::size_t>(c_gamma)] << ',' << row[static_cast<std::size_t>(c_train)] << ','
          << row[static_cast<std::size_t>(c_test1)] << ',' << row[static_cast<std::size_t>(c_test5)] << "\n";
      }
    }
  }

  {
    // Correspondence-weight histogram split by the clean flag (20 bins).
    std::ofstream f(dir / "weight_histogram.csv");
    f << comment << "label,bin_lo,bin_hi,clean_count,mismatched_count\n";
    constexpr int kBins = 20;
    for (const Run& r : runs) {
      const fs::path omega_path = r.path / "omega.csv";
      if (!fs::exists(omega_path)) continue;
      const ParsedCsv omega = read_csv(omega_path);
      if (omega.schema_version != schema)
        throw std::runtime_error("report: schema version mismatch in '" + omega_path.string() + "'");
      const int c_wa = omega.column("omega_a");
      const int c_clean = omega.column("correspondence_clean");
      std::vector<int> clean_bins(kBins, 0), noisy_bins(kBins, 0);
      for (const auto& row : omega.rows) {
        const double w = std::stod(row[static_cast<std::size_t>(c_wa)]);
        const int bin = std::min(kBins - 1, std::max(0, static_cast<int>(w * kBins)));
        if (row[static_cast<std::size_t>(c_clean)] == "1")
          ++clean_bins[static_cast<std::size_t>(bin)];
        else
          ++noisy_bins[static_cast<std::size_t>(bin)];
      }
      for (int b = 0; b < kBins; ++b) {
        f << r.label << ',' << format_double(static_cast<double>(b) / kBins) << ','
          << format_double(static_cast<double>(b + 1) / kBins) << ',' << clean_bins[static_cast<std::size_t>(b)] << ','
          << noisy_bins[static_cast<std::size_t>(b)] << "\n";
      }
    }
  }

  std::cout << "merged " << runs.size() << " run(s) into " << dir.string() << "\n";
  return 0;
}

}  // namespace ntmm::cli
