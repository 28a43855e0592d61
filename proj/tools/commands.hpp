#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace cohortcal::cli {

struct RunOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::filesystem::path out = "out";
  std::filesystem::path data;       // directory with survey/mortality/hr_prior CSVs
  std::filesystem::path map;        // calibrate output holding map_<sex>.json
  std::filesystem::path posterior;  // calibrate output holding posterior_<sex>.csv
  std::vector<std::filesystem::path> runs;
};

void cmd_simulate(const RunOptions& opt);
void cmd_calibrate(const RunOptions& opt);
void cmd_profile(const RunOptions& opt);
void cmd_overlap(const RunOptions& opt);
void cmd_dic(const RunOptions& opt);
void cmd_summarize(const RunOptions& opt);

std::uint64_t fnv1a(const std::filesystem::path& file);

}  // namespace cohortcal::cli
