#include "ntmm/report_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ntmm/experiment.hpp"

namespace ntmm {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_header_comment(const std::string& hash) {
  return "# ntmm schema_version=" + std::to_string(kReportSchemaVersion) + " config_hash=" + hash + "\n";
}

namespace {

const char* kReportColumns =
    "epoch,phase,gamma,l_ins,l_cat,l_c,l_s,ce_observed,ce_corrected,train_top1,test_top1,test_top5,"
    "top5_degenerate,corrected_label_acc,mean_omega_clean,mean_omega_mismatched,mean_ce_clean,mean_ce_noisy";

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("report: cannot write '" + path.string() + "'");
  return f;
}

json nullable(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

void write_report_csv(const TrainReport& report, const std::filesystem::path& path, const std::string& hash) {
  std::ofstream f = open_out(path);
  f << csv_header_comment(hash) << kReportColumns << "\n";
  for (const EpochRecord& r : report.epochs) {
    f << r.epoch << ',' << r.phase << ',' << format_double(r.gamma) << ',' << format_double(r.l_ins) << ','
      << format_double(r.l_cat) << ',' << format_double(r.l_c) << ',' << format_double(r.l_s) << ','
      << format_double(r.ce_observed) << ',' << format_double(r.ce_corrected) << ',' << format_double(r.train_top1)
      << ',' << format_double(r.test_top1) << ',' << format_double(r.test_top5) << ',' << (r.top5_degenerate ? 1 : 0)
      << ',' << format_double(r.corrected_label_acc) << ',' << format_double(r.mean_omega_clean) << ','
      << format_double(r.mean_omega_mismatched) << ',' << format_double(r.mean_ce_clean) << ','
      << format_double(r.mean_ce_noisy) << "\n";
  }
}

void write_report_jsonl(const TrainReport& report, const std::filesystem::path& path, const std::string& hash) {
  std::ofstream f = open_out(path);
  json head;
  head["record"] = "header";
  head["schema_version"] = kReportSchemaVersion;
  head["config_hash"] = hash;
  f << head.dump() << "\n";
  for (const EpochRecord& r : report.epochs) {
    json j;
    j["record"] = "epoch";
    j["epoch"] = r.epoch;
    j["phase"] = r.phase;
    j["gamma"] = r.gamma;
    j["l_ins"] = nullable(r.l_ins);
    j["l_cat"] = nullable(r.l_cat);
    j["l_c"] = nullable(r.l_c);
    j["l_s"] = nullable(r.l_s);
    j["ce_observed"] = nullable(r.ce_observed);
    j["ce_corrected"] = nullable(r.ce_corrected);
    j["train_top1"] = nullable(r.train_top1);
    j["test_top1"] = nullable(r.test_top1);
    j["test_top5"] = nullable(r.test_top5);
    j["top5_degenerate"] = r.top5_degenerate;
    j["corrected_label_acc"] = nullable(r.corrected_label_acc);
    j["mean_omega_clean"] = nullable(r.mean_omega_clean);
    j["mean_omega_mismatched"] = nullable(r.mean_omega_mismatched);
    j["mean_ce_clean"] = nullable(r.mean_ce_clean);
    j["mean_ce_noisy"] = nullable(r.mean_ce_noisy);
    f << j.dump() << "\n";
  }
}

void write_omega_csv(const TrainReport& report, const std::filesystem::path& path, const std::string& hash) {
  std::ofstream f = open_out(path);
  f << csv_header_comment(hash) << "index,omega_v,omega_a,correspondence_clean\n";
  for (std::size_t i = 0; i < report.omega_v.size(); ++i) {
    f << i << ',' << format_double(report.omega_v[i]) << ',' << format_double(report.omega_a[i]) << ','
      << static_cast<int>(report.correspondence_clean[i]) << "\n";
  }
}

void write_ce_csv(const TrainReport& report, const std::filesystem::path& path, const std::string& hash) {
  std::ofstream f = open_out(path);
  f << csv_header_comment(hash) << "index,ce,label_clean\n";
  for (std::size_t i = 0; i < report.per_sample_ce.size(); ++i) {
    f << i << ',' << format_double(report.per_sample_ce[i]) << ',' << static_cast<int>(report.label_clean[i]) << "\n";
  }
}

void write_schema_json(const std::filesystem::path& path) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["report.csv"] = {
      {"epoch", "global epoch index; warm-up epochs count"},
      {"phase", "warmup or main"},
      {"gamma", "corrected-label weight used this epoch"},
      {"l_ins", "mean instance-level contrastive loss over batches (empty if the phase did not run)"},
      {"l_cat", "mean category-level contrastive loss over full batches (empty if never computed)"},
      {"l_c", "mean combined contrastive loss over batches"},
      {"l_s", "mean hybrid supervised loss over batches"},
      {"ce_observed", "mean cross-entropy against observed labels"},
      {"ce_corrected", "mean cross-entropy against corrected labels"},
      {"train_top1", "top-1 accuracy on the train split against observed labels"},
      {"test_top1", "top-1 accuracy on the clean test split against true labels"},
      {"test_top5", "top-5 accuracy on the clean test split (1 when degenerate)"},
      {"top5_degenerate", "1 when K <= 5 makes top-5 trivial"},
      {"corrected_label_acc", "fraction of corrected labels equal to true labels (empty without correction)"},
      {"mean_omega_clean", "mean audio correspondence weight over clean-correspondence samples"},
      {"mean_omega_mismatched", "mean audio correspondence weight over mismatched samples"},
      {"mean_ce_clean", "mean train CE over samples whose observed label is true"},
      {"mean_ce_noisy", "mean train CE over samples with flipped labels"},
  };
  j["omega.csv"] = {
      {"index", "train-split sample index"},
      {"omega_v", "visual correspondence weight at the final epoch"},
      {"omega_a", "audio correspondence weight at the final epoch"},
      {"correspondence_clean", "1 if the sample kept its own audio"},
  };
  j["ce.csv"] = {
      {"index", "train-split sample index"},
      {"ce", "per-sample cross-entropy against the observed label at the final epoch"},
      {"label_clean", "1 if observed label equals true label"},
  };
  std::ofstream f = open_out(path);
  f << j.dump(2) << "\n";
}

int ParsedCsv::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

ParsedCsv read_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("report: cannot open '" + path.string() + "'");
  ParsedCsv out;
  std::string line;
  bool saw_header = false;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string token;
      while (ss >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
        if (key == "schema_version") out.schema_version = std::stoi(value);
        if (key == "config_hash") out.config_hash = value;
      }
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.push_back("");
    if (!saw_header) {
      out.columns = std::move(fields);
      saw_header = true;
    } else {
      out.rows.push_back(std::move(fields));
    }
  }
  return out;
}

}  // namespace ntmm
