#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "protofew/cli/config.hpp"
#include "protofew/data/dataset.hpp"

namespace protofew::cli {

// Stable exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Exit code for the exception currently being handled.
int exit_code_for_current_exception();

/// `synth` / `synth:<palette>` or a dataset root, restricted to `section`.
data::ImageDataset resolve_dataset(const std::string& spec, const RunConfig& config,
                                   const std::string& section);

/// Each command writes its artifacts into the run directory it returns and
/// prints progress to `log`.
std::filesystem::path cmd_pretrain(const RunConfig& config, std::ostream& log);
std::filesystem::path cmd_metatrain(const RunConfig& config, std::ostream& log);
std::filesystem::path cmd_eval(const RunConfig& config, std::ostream& log);
std::filesystem::path cmd_crosseval(const RunConfig& config, std::ostream& log);
std::filesystem::path cmd_report(const RunConfig& config, std::ostream& log);

/// Full front end: parses argv, runs the command, returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace protofew::cli
