#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace fraclab::app {

enum ExitCode : int {
  kPass = 0,
  kInequalityFailed = 1,
  kConfigInvalid = 2,
  kSolverFailed = 3,
};

struct RunOptions {
  std::uint64_t seed = 0;
  int threads = 1;
};

struct CommandOutput {
  std::string text;   ///< CSV or JSON document
  bool json = false;
  int exit_code = kPass;
  std::vector<std::string> failures;  ///< one line per failed check
};

const std::vector<std::string>& command_names();

/// Validates the whole config, then computes. Throws ConfigError on invalid
/// input and SolverError when a solver misses its tolerance.
CommandOutput run_command(const std::string& name, const nlohmann::json& config, const RunOptions& opt);

}  // namespace fraclab::app
