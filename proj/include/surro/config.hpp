#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "surro/active_learning.hpp"

namespace surro {

using nlohmann::json;

/// Read-only view of a JSON object that records which keys were read, so that
/// unknown keys can be reported with their full path.
class ConfigSection {
 public:
  ConfigSection(const json& j, std::string path);

  bool has(const std::string& key) const;
  std::string path(const std::string& key) const { return path_ + "/" + key; }
  const json& raw(const std::string& key);

  double number(const std::string& key, double fallback);
  Index integer(const std::string& key, Index fallback, Index min = 0);
  bool boolean(const std::string& key, bool fallback);
  std::string string(const std::string& key, const std::string& fallback);
  std::optional<double> optional_number(const std::string& key);
  ConfigSection section(const std::string& key);

  /// Throws ConfigError naming the first key that was never read.
  void finish() const;

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> used_;
};

struct EmulatorSettings {
  Index initial_design = 8;
  std::string design = "prior";  // prior | grid
  HyperparameterOptions hyper;
  std::optional<VectorXd> lengthscales;  // with signal_variance: fixed kernel, no optimisation
  std::optional<double> signal_variance;
  Index features = 2048;
  std::optional<std::filesystem::path> snapshot;  // infer: load instead of fitting
};

struct EstimatorSettings {
  EstimatorKind kind = EstimatorKind::PlugIn;
  double alpha = 0.5;
  Index trajectories = 64;
  Index draws = 200;
  double burn_in = 0.25;
  TrajectoryOptions::Mode ep_mode = TrajectoryOptions::Mode::Grid;
  std::string method = "grid";  // grid | mcmc (pointwise estimators)
  Index grid_nodes = 256;       // per dimension
  VarianceAdjustment adjustment;
};

struct ComparisonSettings {
  std::string baseline = "random";  // an acquisition name, or prior_design
  Index seeds = 10;
};

struct ExperimentConfig {
  json source;  // the parsed document, echoed into output directories
  std::shared_ptr<const InverseProblem> problem;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  int threads = 0;
  EmulatorSettings emulator;
  EstimatorSettings estimator;
  ActiveLearningConfig active_learning;
  bool sweep = false;
  Index sweep_nodes = 128;
  std::optional<ComparisonSettings> comparison;
  MhConfig sampler;
  Index oracle_nodes = 256;
};

/// Command-line overrides applied on top of the document.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<int> threads;
};

/// Parses an experiment document. Relative problem paths resolve against `base_dir`.
/// A seed must come from the document or the overrides.
ExperimentConfig parse_config(const json& document, const ConfigOverrides& overrides = {},
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

}  // namespace surro
