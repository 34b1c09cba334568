#pragma once

#include <cstdint>
#include <exception>
#include <string>
#include <vector>

#include "json.hpp"

namespace mcflab::cli {

inline constexpr const char* library_version = "1.0.0";

/// Exit codes of the command-line front end.
enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numerical = 3, exit_admissibility = 4 };

/// One validated run request.  `body` holds the command-specific fields.
struct RunConfig {
    std::string command;  ///< spectrum | foliation | flow | check-params | verify
    std::string output_dir;
    std::uint64_t seed = 1;
    nlohmann::json body = nlohmann::json::object();
    nlohmann::json echo;  ///< the config as given (after flag overrides)
};

/// Validates a run document.  `command` (if nonempty) must agree with the
/// document's own tag.  Throws ConfigError naming the offending field.
RunConfig parse_run_config(const nlohmann::json& doc, const std::string& command);

struct RunResult {
    int exit_code = exit_ok;
    std::string module;  ///< producing module of an error
    std::string error;
    nlohmann::json summary = nlohmann::json::object();  ///< key numbers for sweep tables
    std::vector<std::string> outputs;                   ///< files written, relative to output_dir
};

/// Runs one command and writes manifest.json plus the command's artifacts.
/// Errors are reported through the exit code, never thrown.  `echo` prints
/// human-readable tables to stdout.
RunResult run(const RunConfig& config, int workers = 1, bool echo = true);

/// Exit code of a library exception.
int exit_code_for(const std::exception& e);

/// Expands a sweep document ({"runs": [...]} or {"base": {...}, "vary": {field: [values]}})
/// into run configs whose output dirs sit below `out_root`.  Throws ConfigError.
std::vector<RunConfig> expand_sweep(const nlohmann::json& doc, const std::string& out_root,
                                    std::uint64_t seed, bool seed_given);

struct SweepResult {
    std::vector<RunResult> results;
    std::string csv;  ///< summary table, one row per entry in input order
};

/// Runs entries concurrently on `workers` threads.  Refuses duplicate
/// output dirs (ConfigError) before starting anything.
SweepResult sweep(const std::vector<RunConfig>& runs, int workers);

/// Command-line entry point.
int main_entry(int argc, char** argv);

}  // namespace mcflab::cli
