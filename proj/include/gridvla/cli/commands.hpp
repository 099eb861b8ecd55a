#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "gridvla/cli/config.hpp"

namespace gridvla::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2, kThreshold = 3 };

const std::vector<std::string>& command_names();

struct CommandResult {
  // Command-specific headline numbers; also written to <out_dir>/summary.json.
  nlohmann::json summary;
  // Compared against run.min_success; absent for commands without one.
  std::optional<double> headline_success;
};

// Runs one command into out_dir, which receives config.json, manifest.json,
// metrics.jsonl, summary.json and the command's artifacts. Throws on error.
CommandResult run_command(const std::string& command, const ExperimentConfig& cfg,
                          const std::filesystem::path& out_dir, const std::vector<std::string>& argv = {});

// Git blob id: SHA-1 of "blob <size>\0" followed by the bytes.
std::string git_blob_sha1(const std::string& bytes);

// Full command-line entry point; returns the process exit code.
int main_entry(int argc, char** argv);

}  // namespace gridvla::cli
