#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "surro/gp.hpp"
#include "surro/grid.hpp"
#include "surro/problems.hpp"
#include "surro/rng.hpp"
#include "surro/samplers.hpp"
#include "surro/trajectory.hpp"

namespace surro {

enum class EmulatedQuantity { ForwardModel, LogLikelihood };

enum class EstimatorKind { PlugIn, Eup, Ep, Quantile, Mode, ExpectedLogLik, GridTruth };

std::string estimator_name(EstimatorKind kind);
EstimatorKind parse_estimator(const std::string& name);

/// Replaces the emulator variance used by the estimators: s^2 -> fixed, or s^2 -> scale * s^2.
struct VarianceAdjustment {
  double scale = 1.0;
  std::optional<double> fixed;

  bool identity() const { return !fixed && scale == 1.0; }
  double apply(double s2) const { return fixed ? *fixed : scale * s2; }
};

/// Pointwise predictive summaries; rows are points, columns emulator outputs.
struct PointwisePrediction {
  VectorXd log_prior;
  MatrixXd mean;
  MatrixXd variance;
};

/// Emulator bound to a problem: the random unnormalised density pi(theta; f).
/// A forward-model target emulates G (one GP per output); every other target
/// emulates the scalar log-likelihood.
class SurrogatePosterior {
 public:
  SurrogatePosterior(std::shared_ptr<const InverseProblem> problem, MultiOutputGp emulator,
                     VarianceAdjustment adjustment = {});

  const InverseProblem& problem() const { return *problem_; }
  std::shared_ptr<const InverseProblem> problem_ptr() const { return problem_; }
  const MultiOutputGp& emulator() const { return emulator_; }
  EmulatedQuantity quantity() const { return quantity_; }
  const VarianceAdjustment& adjustment() const { return adjustment_; }
  Index dim() const { return problem_->dim(); }

  SurrogatePosterior with_adjustment(VarianceAdjustment adjustment) const;

  PointwisePrediction predict(const MatrixXd& points) const;

  /// Unnormalised log surrogate density of the given pointwise estimator.
  /// Ep and GridTruth are not pointwise and are rejected.
  VectorXd log_density(EstimatorKind kind, const MatrixXd& points, double alpha = 0.5) const;
  double log_density(EstimatorKind kind, const VectorXd& theta, double alpha = 0.5) const;

 private:
  std::shared_ptr<const InverseProblem> problem_;
  MultiOutputGp emulator_;
  EmulatedQuantity quantity_;
  VarianceAdjustment adjustment_;
  std::shared_ptr<const GaussianLikelihood> likelihood_;
};

/// Mean and variance of the random unnormalised density at one point, with logs.
struct PushforwardMoments {
  double mean = 0.0;
  double variance = 0.0;
  double log_mean = 0.0;
  double log_variance = 0.0;
  bool overflow = false;
};

// Pointwise closed forms. `mean`/`var` are the emulator's predictive moments at theta.
PushforwardMoments pushforward_moments_fwd(double log_prior, const VectorXd& mean, const VectorXd& var,
                                           const VectorXd& y_obs, const MatrixXd& noise_cov);
PushforwardMoments pushforward_moments_ldens(double log_prior, double mean, double var);
double log_eup_fwd(double log_prior, const VectorXd& mean, const VectorXd& var, const VectorXd& y_obs,
                   const MatrixXd& noise_cov);
double log_eup_ldens(double log_prior, double mean, double var);
double log_quantile_ldens(double log_prior, double mean, double var, double alpha);
double log_mode_ldens(double log_prior, double mean, double var);
/// log pi_0 + E[log L(theta; f)] for a Gaussian likelihood of the forward model.
double expected_loglik_fwd(double log_prior, const VectorXd& mean, const VectorXd& var, const VectorXd& y_obs,
                           const MatrixXd& noise_cov);

PushforwardMoments pushforward_moments(const SurrogatePosterior& sp, const VectorXd& theta);

struct PosteriorEstimate {
  enum class Representation { GridDensity, Samples };

  EstimatorKind kind = EstimatorKind::PlugIn;
  Representation representation = Representation::GridDensity;
  double alpha = 0.5;

  Grid grid;  // GridDensity
  VectorXd density;

  MatrixXd samples;  // Samples: one row per draw
  VectorXd weights;  // optional
  std::vector<Index> trajectory;

  Index trajectories = 0;  // EP: K
  Index draws_per_trajectory = 0;  // EP: M
  std::uint64_t seed = 0;

  bool is_grid() const { return representation == Representation::GridDensity; }
  Moments moments() const;
};

/// Normalised pointwise estimate on a grid. All-zero density -> DegenerateEstimateError.
PosteriorEstimate estimate_on_grid(const SurrogatePosterior& sp, EstimatorKind kind, const Grid& grid,
                                   double alpha = 0.5);
/// Random-walk MH on the pointwise log surrogate density.
PosteriorEstimate estimate_by_mcmc(const SurrogatePosterior& sp, EstimatorKind kind, const MhConfig& config,
                                   double alpha = 0.5);

PosteriorEstimate estimate_plug_in(const SurrogatePosterior& sp, const Grid& grid);
PosteriorEstimate estimate_eup(const SurrogatePosterior& sp, const Grid& grid);

struct EpOptions {
  Index trajectories = 64;  // K
  Index draws = 200;        // M per trajectory
  TrajectoryOptions::Mode mode = TrajectoryOptions::Mode::Grid;
  Grid grid;                // grid mode: evaluation set
  Index features = 2048;    // feature mode
  double burn_in = 0.25;
  int threads = 0;
};

/// Expected-posterior sampling: K trajectories, M MH draws from each trajectory's posterior.
/// Grid mode runs MH on the per-trajectory grid density, linearly interpolated,
/// starting from an exact grid draw. Feature mode runs MH on the trajectory
/// itself, starting from a sampling-importance-resampling prior draw.
PosteriorEstimate sample_ep(const SurrogatePosterior& sp, const EpOptions& options, Rng& rng);

/// Average of the K per-trajectory normalised grid densities (the grid-mode EP density).
/// Uses the same per-trajectory random streams as sample_ep.
PosteriorEstimate ep_grid_mixture(const SurrogatePosterior& sp, const Grid& grid, Index trajectories, Rng& rng);

/// Estimate density tabulated at a grid (grid estimates directly, samples via a histogram in TV).
double tv_to_grid_density(const PosteriorEstimate& estimate, const VectorXd& density, const Grid& grid,
                          Index bins = 64);

}  // namespace surro
