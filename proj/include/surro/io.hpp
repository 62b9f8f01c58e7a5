#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "surro/active_learning.hpp"
#include "surro/estimators.hpp"
#include "surro/gp.hpp"
#include "surro/problems.hpp"

namespace surro::io {

using nlohmann::json;

/// Round-trippable decimal: 17 significant digits; "nan", "inf", "-inf" for non-finite values.
std::string format_double(double v);

json matrix_to_json(const MatrixXd& m);
json vector_to_json(const VectorXd& v);
MatrixXd matrix_from_json(const json& j, const std::string& path);
VectorXd vector_from_json(const json& j, const std::string& path);

/// Snapshot of a fitted emulator: hyperparameters and design data. Reloading refits
/// the factorisation, which reproduces the original bit for bit.
json emulator_to_json(const MultiOutputGp& gp);
MultiOutputGp emulator_from_json(const json& j);

/// Text written with LF line endings; parent directories are created.
void write_file(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);
/// Two-space indented JSON with a trailing newline.
std::string dump_json(const json& j);

/// Comma-separated table with a header row.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& cells);
  void add_numeric_row(const std::vector<double>& values);
  std::string str() const;
  Index rows() const { return static_cast<Index>(rows_.size()); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::vector<std::string> theta_columns(Index dim);

/// theta_0[,theta_1],density
CsvTable grid_density_csv(const Grid& grid, const VectorXd& density);
/// draw,trajectory,theta_0[,theta_1]
CsvTable samples_csv(const PosteriorEstimate& estimate);
/// Either of the two above, depending on the representation.
CsvTable posterior_csv(const PosteriorEstimate& estimate);
/// round,point_idx,theta_*,acq_value,tv_to_oracle,cumulative_calls; acquisition rounds only
/// (the initial design is not listed).
CsvTable rounds_csv(const DesignHistory& history, Index dim);
/// output,point,theta_*,response,loo_mean,loo_variance,standardized_residual,log_score
CsvTable loo_csv(const MultiOutputGp& gp);
/// point,theta_*,response_*
CsvTable design_csv(const MatrixXd& x, const MatrixXd& y);

/// Problem from a JSON spec: a built-in name, {"builtin": name, "target": {...}}, or a full
/// definition (prior, observation, noise, forward model, target). `path` prefixes error messages.
std::shared_ptr<const InverseProblem> problem_from_json(const json& j, const std::string& path = "/problem");

}  // namespace surro::io
