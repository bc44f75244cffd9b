#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dehaze/common.hpp"

// Experiment report: one row per method/variant, machine-readable rows plus a
// rendered table. Rows carry the checkpoint they came from and the report
// embeds the config hash, so every number is traceable and re-runs with an
// unchanged config reproduce the file byte for byte.

namespace dehaze {

struct ReportRow {
  std::string name;
  double psnr = 0;
  double ssim = 0;
  double acc_cnet = 0;
  std::map<std::string, double> extra_accuracy;
  std::int64_t samples = 0;
  std::string checkpoint;
  bool failed = false;
  std::string error;
};

struct ExperimentReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string dataset;
  std::string note;
  std::vector<ReportRow> rows;
};

inline void write_report(const std::string& path, const ExperimentReport& r) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report: " + path);
  nlohmann::json meta{{"record", "meta"},
                      {"config_hash", r.config_hash},
                      {"seed", r.seed},
                      {"dataset", r.dataset},
                      {"note", r.note}};
  out << meta.dump() << "\n";
  for (const auto& row : r.rows) {
    nlohmann::json j{{"record", "row"},   {"name", row.name},
                     {"psnr", row.psnr},  {"ssim", row.ssim},
                     {"acc_cnet", row.acc_cnet}, {"samples", row.samples},
                     {"checkpoint", row.checkpoint}, {"failed", row.failed}};
    if (!row.extra_accuracy.empty()) j["extra_accuracy"] = row.extra_accuracy;
    if (!row.error.empty()) j["error"] = row.error;
    out << j.dump() << "\n";
  }
}

inline std::string render_report_table(const ExperimentReport& r) {
  std::ostringstream os;
  std::size_t name_w = 16;
  for (const auto& row : r.rows) name_w = std::max(name_w, row.name.size() + 2);
  char buf[256];
  os << "dataset: " << r.dataset << "  seed: " << r.seed << "  config: " << r.config_hash
     << "\n";
  std::snprintf(buf, sizeof(buf), "%-*s %10s %8s %8s %9s\n", static_cast<int>(name_w), "",
                "PSNR", "SSIM", "CNet", "samples");
  os << buf;
  for (const auto& row : r.rows) {
    if (row.failed) {
      std::snprintf(buf, sizeof(buf), "%-*s %10s %8s %8s %9s   FAILED: %s\n",
                    static_cast<int>(name_w), row.name.c_str(), "-", "-", "-", "-",
                    row.error.c_str());
    } else {
      std::snprintf(buf, sizeof(buf), "%-*s %10.4f %8.4f %8.1f %9lld\n",
                    static_cast<int>(name_w), row.name.c_str(), row.psnr, row.ssim,
                    row.acc_cnet, static_cast<long long>(row.samples));
    }
    os << buf;
  }
  return os.str();
}

}  // namespace dehaze
