#pragma once

#include <vector>

#include <Eigen/Core>

namespace surro {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Tensor-product quadrature grid in one or two dimensions.
///
/// Node i of a 2-D grid is (axis0[i / n1], axis1[i % n1]). Weights are
/// trapezoid-rule weights, so integrate(f) = sum_i w_i f_i.
class Grid {
 public:
  static Grid uniform(const VectorXd& lower, const VectorXd& upper, Index nodes_per_dim);
  /// Axes must be strictly increasing with at least two nodes each.
  static Grid from_axes(std::vector<VectorXd> axes);

  Index dim() const { return static_cast<Index>(axes_.size()); }
  Index size() const { return points_.rows(); }
  const MatrixXd& points() const { return points_; }
  const VectorXd& weights() const { return weights_; }
  const std::vector<VectorXd>& axes() const { return axes_; }
  Index nodes(Index d) const { return axes_[static_cast<std::size_t>(d)].size(); }
  double volume() const;

  double integrate(const VectorXd& values) const { return weights_.dot(values); }

  /// Piecewise (bi)linear interpolation of node values; clamps to the box.
  double interpolate(const VectorXd& values, const VectorXd& x) const;

  /// Index of the node nearest to x (per-axis nearest).
  Index nearest_node(const VectorXd& x) const;

 private:
  std::vector<VectorXd> axes_;
  MatrixXd points_;
  VectorXd weights_;
};

/// exp(log_values - max) divided by its trapezoid integral.
/// Throws InputError when the shifted values are not finite.
VectorXd normalize_on_grid(const VectorXd& log_values, const Grid& grid);

/// Total-variation distance between two densities tabulated on the same grid.
double tv_distance(const VectorXd& p, const VectorXd& q, const Grid& grid);

struct Moments {
  VectorXd mean;
  VectorXd variance;
};

Moments grid_moments(const VectorXd& density, const Grid& grid);

/// Moments of rows of `samples`; optional non-negative weights.
Moments sample_moments(const MatrixXd& samples, const VectorXd& weights = VectorXd());

/// Histogram density of samples on a coarser tensor grid of `bins` cells per
/// axis spanning the grid's box, compared in TV against the grid density after
/// integrating it over the same cells.
double tv_samples_to_grid(const MatrixXd& samples, const VectorXd& density, const Grid& grid, Index bins = 64);

/// Number of strict local maxima of a 1-D density above `fraction` * max.
int count_peaks(const VectorXd& density, double fraction);

}  // namespace surro
