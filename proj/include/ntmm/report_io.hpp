#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ntmm/trainer.hpp"

namespace ntmm {

/// Shortest round-trip decimal form; deterministic for identical doubles.
std::string format_double(double v);

/// Leading comment line carried by every emitted CSV:
/// "# ntmm schema_version=<v> config_hash=<hex>".
std::string csv_header_comment(const std::string& hash);

void write_report_csv(const TrainReport& report, const std::filesystem::path& path, const std::string& hash);
void write_report_jsonl(const TrainReport& report, const std::filesystem::path& path, const std::string& hash);
void write_omega_csv(const TrainReport& report, const std::filesystem::path& path, const std::string& hash);
void write_ce_csv(const TrainReport& report, const std::filesystem::path& path, const std::string& hash);

/// Column documentation for every CSV this run emits.
void write_schema_json(const std::filesystem::path& path);

struct ParsedCsv {
  int schema_version = 0;
  std::string config_hash;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

/// Reads back a CSV written by this module (no quoting, comma-separated).
ParsedCsv read_csv(const std::filesystem::path& path);

}  // namespace ntmm
