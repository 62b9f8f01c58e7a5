#pragma once

#include <memory>

#include "surro/gp.hpp"
#include "surro/rng.hpp"

namespace surro {

struct TrajectoryOptions {
  enum class Mode { Grid, Feature };

  Mode mode = Mode::Feature;
  MatrixXd grid_points;   // Grid mode: the evaluation set (rows are points)
  Index features = 2048;  // Feature mode: random Fourier feature count
};

/// One sampled realisation of an emulator's latent function.
///
/// Grid realisations hold a joint draw at fixed nodes and can only be read at
/// those nodes. Feature realisations are pathwise-conditioned random Fourier
/// expansions and can be evaluated anywhere.
class TrajectoryRealization {
 public:
  using Mode = TrajectoryOptions::Mode;

  Mode mode() const { return mode_; }

  /// Grid mode only.
  const VectorXd& grid_values() const { return grid_values_; }
  const MatrixXd& grid_points() const { return grid_points_; }

  /// Feature mode: any x. Grid mode: x must coincide with a node.
  double operator()(const VectorXd& x) const;
  VectorXd evaluate(const MatrixXd& points) const;

 private:
  friend class GridTrajectorySampler;
  friend TrajectoryRealization sample_trajectory(const GpEmulator&, const TrajectoryOptions&, Rng&);

  Mode mode_ = Mode::Grid;
  MatrixXd grid_points_;
  VectorXd grid_values_;

  // Feature mode
  MatrixXd omega_;  // F x D
  VectorXd phase_;
  VectorXd weights_;
  double amplitude_ = 0.0;
  MatrixXd design_;
  VectorXd correction_;
  Kernel kernel_;
  MeanFunction mean_;
};

/// Joint draws on a fixed set of points, with the predictive factor computed once.
class GridTrajectorySampler {
 public:
  GridTrajectorySampler(const GpEmulator& gp, MatrixXd points);

  const MatrixXd& points() const { return points_; }
  const VectorXd& mean() const { return mean_; }
  VectorXd sample_values(Rng& rng) const;
  TrajectoryRealization sample(Rng& rng) const;

 private:
  MatrixXd points_;
  VectorXd mean_;
  MatrixXd factor_;
};

TrajectoryRealization sample_trajectory(const GpEmulator& gp, const TrajectoryOptions& options, Rng& rng);

}  // namespace surro
