#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "surro/config.hpp"
#include "surro/verify.hpp"

namespace surro::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeFailure = 1, kConfigError = 2, kVerificationFailure = 3 };

/// Initial design and simulator responses of the `emulator` settings (same random
/// streams as round 0 of an active-learning campaign for prior designs).
struct Design {
  MatrixXd points;
  MatrixXd responses;
  Index dropped = 0;
};
Design initial_design(const ExperimentConfig& config);

/// Fitted emulator for the configured problem, or the snapshot named in the config.
MultiOutputGp build_emulator(const ExperimentConfig& config);

// Each command writes into config.output_dir and returns an exit code.
int cmd_fit(const ExperimentConfig& config, std::ostream& out);
int cmd_infer(const ExperimentConfig& config, std::ostream& out);
int cmd_design(const ExperimentConfig& config, std::ostream& out);
int cmd_oracle(const ExperimentConfig& config, std::ostream& out);
int cmd_verify(const VerifyOptions& options, const std::filesystem::path& output_dir, std::ostream& out);

/// Integral of a grid posterior CSV (theta_0[,theta_1],density) over its nodes.
double integrate_posterior_csv(const std::filesystem::path& path);

/// Entry point: parses arguments, dispatches, and maps exceptions to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace surro::cli
