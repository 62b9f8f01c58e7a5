#include "surro/grid.hpp"

#include <algorithm>
#include <cmath>

#include "surro/errors.hpp"

namespace surro {

namespace {

VectorXd trapezoid_weights(const VectorXd& axis) {
  const Index n = axis.size();
  VectorXd w = VectorXd::Zero(n);
  for (Index i = 0; i + 1 < n; ++i) {
    const double h = axis(i + 1) - axis(i);
    w(i) += 0.5 * h;
    w(i + 1) += 0.5 * h;
  }
  return w;
}

// Lower index of the cell containing x, and the fractional position in it.
std::pair<Index, double> locate(const VectorXd& axis, double x) {
  const Index n = axis.size();
  if (x <= axis(0)) return {0, 0.0};
  if (x >= axis(n - 1)) return {n - 2, 1.0};
  const double* begin = axis.data();
  const Index hi = static_cast<Index>(std::upper_bound(begin, begin + n, x) - begin);
  const Index lo = hi - 1;
  return {lo, (x - axis(lo)) / (axis(hi) - axis(lo))};
}

}  // namespace

Grid Grid::uniform(const VectorXd& lower, const VectorXd& upper, Index nodes_per_dim) {
  if (lower.size() != upper.size()) throw InputError("Grid::uniform: bound dimensions differ");
  std::vector<VectorXd> axes;
  for (Index d = 0; d < lower.size(); ++d) axes.push_back(VectorXd::LinSpaced(nodes_per_dim, lower(d), upper(d)));
  return from_axes(std::move(axes));
}

Grid Grid::from_axes(std::vector<VectorXd> axes) {
  if (axes.empty() || axes.size() > 2) throw InputError("Grid: only 1-D and 2-D grids are supported");
  for (const auto& a : axes) {
    if (a.size() < 2) throw InputError("Grid: each axis needs at least two nodes");
    for (Index i = 0; i + 1 < a.size(); ++i)
      if (!(a(i + 1) > a(i))) throw InputError("Grid: axis nodes must be strictly increasing");
  }
  Grid g;
  g.axes_ = std::move(axes);
  if (g.axes_.size() == 1) {
    g.points_ = g.axes_[0];
    g.weights_ = trapezoid_weights(g.axes_[0]);
  } else {
    const VectorXd& a0 = g.axes_[0];
    const VectorXd& a1 = g.axes_[1];
    const VectorXd w0 = trapezoid_weights(a0);
    const VectorXd w1 = trapezoid_weights(a1);
    g.points_.resize(a0.size() * a1.size(), 2);
    g.weights_.resize(a0.size() * a1.size());
    for (Index i = 0; i < a0.size(); ++i)
      for (Index j = 0; j < a1.size(); ++j) {
        const Index k = i * a1.size() + j;
        g.points_(k, 0) = a0(i);
        g.points_(k, 1) = a1(j);
        g.weights_(k) = w0(i) * w1(j);
      }
  }
  return g;
}

double Grid::volume() const {
  double v = 1.0;
  for (const auto& a : axes_) v *= a(a.size() - 1) - a(0);
  return v;
}

double Grid::interpolate(const VectorXd& values, const VectorXd& x) const {
  if (dim() == 1) {
    const auto [i, t] = locate(axes_[0], x(0));
    return (1.0 - t) * values(i) + t * values(i + 1);
  }
  const Index n1 = axes_[1].size();
  const auto [i, t] = locate(axes_[0], x(0));
  const auto [j, u] = locate(axes_[1], x(1));
  const double v00 = values(i * n1 + j), v01 = values(i * n1 + j + 1);
  const double v10 = values((i + 1) * n1 + j), v11 = values((i + 1) * n1 + j + 1);
  return (1.0 - t) * ((1.0 - u) * v00 + u * v01) + t * ((1.0 - u) * v10 + u * v11);
}

Index Grid::nearest_node(const VectorXd& x) const {
  Index index = 0;
  for (std::size_t d = 0; d < axes_.size(); ++d) {
    const auto [i, t] = locate(axes_[d], x(static_cast<Index>(d)));
    const Index k = t < 0.5 ? i : i + 1;
    index = d == 0 ? k : index * axes_[d].size() + k;
  }
  return index;
}

VectorXd normalize_on_grid(const VectorXd& log_values, const Grid& grid) {
  if (log_values.size() != grid.size()) throw InputError("normalize_on_grid: value count does not match grid");
  const double m = log_values.maxCoeff();
  if (!std::isfinite(m)) throw InputError("normalize_on_grid: log-density has no finite maximum");
  VectorXd d = (log_values.array() - m).exp();
  if (!d.allFinite()) throw InputError("normalize_on_grid: non-finite value after max shift");
  const double z = grid.integrate(d);
  if (!(z > 0.0) || !std::isfinite(z)) throw InputError("normalize_on_grid: non-positive integral");
  return d / z;
}

double tv_distance(const VectorXd& p, const VectorXd& q, const Grid& grid) {
  return 0.5 * grid.integrate((p - q).cwiseAbs());
}

Moments grid_moments(const VectorXd& density, const Grid& grid) {
  const double z = grid.integrate(density);
  Moments m;
  m.mean.resize(grid.dim());
  m.variance.resize(grid.dim());
  for (Index d = 0; d < grid.dim(); ++d) {
    const VectorXd x = grid.points().col(d);
    const double mu = grid.integrate(density.cwiseProduct(x)) / z;
    m.mean(d) = mu;
    m.variance(d) = grid.integrate(density.cwiseProduct((x.array() - mu).square().matrix())) / z;
  }
  return m;
}

Moments sample_moments(const MatrixXd& samples, const VectorXd& weights) {
  VectorXd w = weights.size() == 0 ? VectorXd::Constant(samples.rows(), 1.0) : weights;
  w /= w.sum();
  Moments m;
  m.mean = samples.transpose() * w;
  m.variance.resize(samples.cols());
  for (Index d = 0; d < samples.cols(); ++d)
    m.variance(d) = w.dot((samples.col(d).array() - m.mean(d)).square().matrix());
  return m;
}

double tv_samples_to_grid(const MatrixXd& samples, const VectorXd& density, const Grid& grid, Index bins) {
  if (samples.cols() != grid.dim()) throw InputError("tv_samples_to_grid: dimension mismatch");
  std::vector<VectorXd> edges;
  for (const auto& a : grid.axes()) edges.push_back(VectorXd::LinSpaced(bins + 1, a(0), a(a.size() - 1)));
  const Index cells = grid.dim() == 1 ? bins : bins * bins;
  auto cell_of = [&](const VectorXd& x) {
    Index c = 0;
    for (Index d = 0; d < grid.dim(); ++d) {
      const auto& e = edges[static_cast<std::size_t>(d)];
      const double t = (x(d) - e(0)) / (e(bins) - e(0)) * static_cast<double>(bins);
      const Index k = std::clamp<Index>(static_cast<Index>(std::floor(t)), 0, bins - 1);
      c = c * bins + k;
    }
    return c;
  };
  VectorXd empirical = VectorXd::Zero(cells);
  for (Index i = 0; i < samples.rows(); ++i) empirical(cell_of(samples.row(i).transpose())) += 1.0;
  empirical /= static_cast<double>(samples.rows());

  // Cell masses of the tabulated density: integrate its interpolant with a
  // fine midpoint rule inside every cell.
  constexpr Index kSub = 8;
  VectorXd reference = VectorXd::Zero(cells);
  const double total = grid.integrate(density);
  if (grid.dim() == 1) {
    const auto& e = edges[0];
    for (Index c = 0; c < bins; ++c) {
      const double h = (e(c + 1) - e(c)) / kSub;
      for (Index s = 0; s < kSub; ++s) {
        VectorXd x(1);
        x(0) = e(c) + (s + 0.5) * h;
        reference(c) += grid.interpolate(density, x) * h;
      }
    }
  } else {
    const auto& e0 = edges[0];
    const auto& e1 = edges[1];
    for (Index a = 0; a < bins; ++a)
      for (Index b = 0; b < bins; ++b) {
        const double h0 = (e0(a + 1) - e0(a)) / kSub, h1 = (e1(b + 1) - e1(b)) / kSub;
        double mass = 0.0;
        for (Index s = 0; s < kSub; ++s)
          for (Index t = 0; t < kSub; ++t) {
            VectorXd x(2);
            x << e0(a) + (s + 0.5) * h0, e1(b) + (t + 0.5) * h1;
            mass += grid.interpolate(density, x) * h0 * h1;
          }
        reference(a * bins + b) = mass;
      }
  }
  reference /= reference.sum() > 0.0 ? reference.sum() : total;
  return 0.5 * (empirical - reference).cwiseAbs().sum();
}

int count_peaks(const VectorXd& density, double fraction) {
  const double threshold = fraction * density.maxCoeff();
  int peaks = 0;
  const Index n = density.size();
  for (Index i = 0; i < n; ++i) {
    const double left = i > 0 ? density(i - 1) : -1.0;
    const double right = i + 1 < n ? density(i + 1) : -1.0;
    if (density(i) > left && density(i) >= right && density(i) >= threshold) ++peaks;
  }
  return peaks;
}

}  // namespace surro
