#pragma once

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

#include "scott/cli/config.hpp"

namespace scott::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitDependency = 3,
  kExitNumeric = 4,
  kExitIo = 5,
};

/// Exit code and category name for an exception escaping a command.
struct Failure {
  int code = kExitConfig;
  std::string category;
};
Failure classify(const std::exception& e);

// Each command reads and writes only under config.output_dir and finishes by
// writing <command>.manifest, a valid config file (run facts as comments)
// that re-executes the run.
void cmd_train_teacher(const ExperimentConfig& config);
void cmd_distill(const ExperimentConfig& config);
void cmd_sample(const ExperimentConfig& config);
void cmd_eval(const ExperimentConfig& config);
void cmd_solver_bench(const ExperimentConfig& config);
void cmd_order_check(const ExperimentConfig& config);

const std::vector<std::string>& command_names();
void run_command(const std::string& name, const ExperimentConfig& config);

/// Full front end: `<command> --config <path> [--set key=value ...]
/// [--seed N] [--out DIR]`. Returns the process exit code; on failure also
/// writes <out>/<command>.error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scott::cli
