#pragma once

#include <string>

#include "gpcert/experiments.hpp"

namespace gpcert::cli {

// Verb implementations behind main_cli.  Each returns a process exit code;
// configuration problems throw UsageError before any output is written.
int run_command(const ExperimentConfig& cfg);
int collect_command(const ExperimentConfig& cfg);
int timing_command(const ExperimentConfig& cfg);
int noise_sweep_command(const ExperimentConfig& cfg);
int calibrate_beta_command(const ExperimentConfig& cfg);
int dataset_build_command(const ExperimentConfig& cfg);
int dataset_info_command(const std::string& path);

}  // namespace gpcert::cli
