#include "surro/trajectory.hpp"

#include <cmath>
#include <numbers>

#include "surro/errors.hpp"

namespace surro {

double TrajectoryRealization::operator()(const VectorXd& x) const {
  if (mode_ == Mode::Grid) {
    for (Index i = 0; i < grid_points_.rows(); ++i)
      if (grid_points_.row(i).transpose() == x) return grid_values_(i);
    throw InputError("grid trajectory evaluated away from its nodes");
  }
  const VectorXd arg = omega_ * x + phase_;
  double prior = 0.0;
  for (Index i = 0; i < arg.size(); ++i) prior += weights_(i) * std::cos(arg(i));
  const MatrixXd xm = x.transpose();
  return mean_(x) + amplitude_ * prior + (kernel_.matrix(xm, design_) * correction_)(0);
}

VectorXd TrajectoryRealization::evaluate(const MatrixXd& points) const {
  if (mode_ == Mode::Grid) {
    VectorXd out(points.rows());
    for (Index i = 0; i < points.rows(); ++i) out(i) = (*this)(points.row(i).transpose());
    return out;
  }
  const MatrixXd arg = (points * omega_.transpose()).rowwise() + phase_.transpose();
  const VectorXd prior = amplitude_ * (arg.array().cos().matrix() * weights_);
  return mean_.evaluate(points) + prior + kernel_.matrix(points, design_) * correction_;
}

GridTrajectorySampler::GridTrajectorySampler(const GpEmulator& gp, MatrixXd points) : points_(std::move(points)) {
  if (points_.rows() == 0) throw InputError("grid trajectory: empty evaluation set");
  if (points_.cols() != gp.dim()) throw InputError("grid trajectory: dimension mismatch");
  const PredictiveDistribution pred = gp.predict(points_, false);
  mean_ = pred.mean;
  factor_ = psd_factor(pred.cov);
}

VectorXd GridTrajectorySampler::sample_values(Rng& rng) const {
  return mean_ + factor_ * rng.normal_vector(points_.rows());
}

TrajectoryRealization GridTrajectorySampler::sample(Rng& rng) const {
  TrajectoryRealization t;
  t.mode_ = TrajectoryRealization::Mode::Grid;
  t.grid_points_ = points_;
  t.grid_values_ = sample_values(rng);
  return t;
}

TrajectoryRealization sample_trajectory(const GpEmulator& gp, const TrajectoryOptions& options, Rng& rng) {
  if (options.mode == TrajectoryOptions::Mode::Grid) {
    if (options.grid_points.rows() == 0) throw InputError("grid trajectory requires an evaluation set");
    return GridTrajectorySampler(gp, options.grid_points).sample(rng);
  }
  const Kernel& k = gp.kernel();
  if (options.features < 1) throw InputError("feature trajectory: feature count must be positive");

  const Index f = options.features;
  const Index d = gp.dim();
  TrajectoryRealization t;
  t.mode_ = TrajectoryRealization::Mode::Feature;
  t.omega_.resize(f, d);
  for (Index i = 0; i < f; ++i)
    for (Index j = 0; j < d; ++j) t.omega_(i, j) = rng.normal() / k.lengthscales(j);
  t.phase_.resize(f);
  for (Index i = 0; i < f; ++i) t.phase_(i) = rng.uniform(0.0, 2.0 * std::numbers::pi);
  t.weights_ = rng.normal_vector(f);
  t.amplitude_ = std::sqrt(2.0 * k.signal_variance / static_cast<double>(f));
  t.kernel_ = k;
  t.mean_ = MeanFunction::zero();
  t.design_ = gp.inputs();
  t.correction_ = VectorXd::Zero(gp.size());

  // Pathwise update: f = m0 + f0 + k0(., X) K^{-1} (y - m0(X) - f0(X) - eps).
  const VectorXd prior_at_design = t.evaluate(gp.inputs());
  VectorXd eps(gp.size());
  const double noise_sd = std::sqrt(gp.noise_variance() + gp.jitter());
  for (Index i = 0; i < gp.size(); ++i) eps(i) = noise_sd * rng.normal();
  const VectorXd resid = gp.responses() - gp.mean_function().evaluate(gp.inputs()) - prior_at_design - eps;
  const auto& l = gp.cholesky();
  t.correction_ = l.triangularView<Eigen::Lower>().transpose().solve(l.triangularView<Eigen::Lower>().solve(resid));
  t.mean_ = gp.mean_function();
  return t;
}

}  // namespace surro
