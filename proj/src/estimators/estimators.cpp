#include "surro/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "surro/errors.hpp"
#include "surro/log.hpp"
#include "surro/parallel.hpp"

namespace surro {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogMax = std::log(std::numeric_limits<double>::max());

double log_det_2pi(const MatrixXd& lower) {
  return static_cast<double>(lower.rows()) * kLog2Pi + log_det_from_cholesky(lower);
}

MatrixXd factor_or_throw(const MatrixXd& c, const char* what) {
  Eigen::LLT<MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) throw FactorizationError(std::string(what) + ": covariance not positive definite");
  return llt.matrixL();
}

double log_normal_with_factor(const VectorXd& r, const MatrixXd& lower) {
  return -0.5 * log_det_2pi(lower) - 0.5 * lower.triangularView<Eigen::Lower>().solve(r).squaredNorm();
}

void check_fwd_args(const VectorXd& mean, const VectorXd& var, const VectorXd& y, const MatrixXd& noise) {
  if (mean.size() != y.size() || var.size() != y.size() || noise.rows() != y.size() || noise.cols() != y.size())
    throw InputError("forward-model moments: dimension mismatch");
}

// exp(a) - exp(b) for a >= b, in logs; -inf when they coincide.
double log_diff_exp(double a, double b) {
  if (!(b < a)) return kNegInf;
  if (!std::isfinite(b)) return a;
  return a + std::log1p(-std::exp(b - a));
}

double safe_exp(double v, bool& overflow) {
  if (v > kLogMax) {
    overflow = true;
    return std::numeric_limits<double>::infinity();
  }
  return std::exp(v);
}

}  // namespace

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::PlugIn:
      return "plug_in";
    case EstimatorKind::Eup:
      return "eup";
    case EstimatorKind::Ep:
      return "ep";
    case EstimatorKind::Quantile:
      return "quantile";
    case EstimatorKind::Mode:
      return "mode";
    case EstimatorKind::ExpectedLogLik:
      return "expected_loglik";
    case EstimatorKind::GridTruth:
      return "grid_truth";
  }
  return "unknown";
}

EstimatorKind parse_estimator(const std::string& name) {
  for (auto k : {EstimatorKind::PlugIn, EstimatorKind::Eup, EstimatorKind::Ep, EstimatorKind::Quantile,
                 EstimatorKind::Mode, EstimatorKind::ExpectedLogLik, EstimatorKind::GridTruth})
    if (estimator_name(k) == name) return k;
  throw InputError("unknown estimator '" + name + "'");
}

SurrogatePosterior::SurrogatePosterior(std::shared_ptr<const InverseProblem> problem, MultiOutputGp emulator,
                                       VarianceAdjustment adjustment)
    : problem_(std::move(problem)), emulator_(std::move(emulator)), adjustment_(adjustment) {
  if (!problem_) throw InputError("surrogate posterior: no problem");
  if (emulator_.components().empty()) throw InputError("surrogate posterior: empty emulator");
  if (emulator_.dim() != problem_->dim()) throw InputError("surrogate posterior: emulator and prior dimensions differ");
  quantity_ = std::holds_alternative<ForwardModelTarget>(problem_->target) ? EmulatedQuantity::ForwardModel
                                                                          : EmulatedQuantity::LogLikelihood;
  if (quantity_ == EmulatedQuantity::ForwardModel) {
    if (emulator_.outputs() != problem_->outputs())
      throw InputError("surrogate posterior: forward-model emulator needs one output per observation");
    likelihood_ = std::make_shared<GaussianLikelihood>(problem_->observation, problem_->noise_cov);
  } else if (emulator_.outputs() != 1) {
    throw InputError("surrogate posterior: log-likelihood emulator must have one output");
  }
  if (!(adjustment_.scale >= 0.0) || (adjustment_.fixed && !(*adjustment_.fixed >= 0.0)))
    throw InputError("surrogate posterior: variance adjustment must be non-negative");
}

SurrogatePosterior SurrogatePosterior::with_adjustment(VarianceAdjustment adjustment) const {
  return SurrogatePosterior(problem_, emulator_, adjustment);
}

PointwisePrediction SurrogatePosterior::predict(const MatrixXd& points) const {
  PointwisePrediction out;
  out.log_prior = problem_->prior.log_density_rows(points);
  auto [mean, var] = emulator_.predict_marginal(points);
  if (!adjustment_.identity()) var = var.unaryExpr([&](double v) { return adjustment_.apply(v); });
  out.mean = std::move(mean);
  out.variance = std::move(var);
  return out;
}

VectorXd SurrogatePosterior::log_density(EstimatorKind kind, const MatrixXd& points, double alpha) const {
  if (kind == EstimatorKind::Ep || kind == EstimatorKind::GridTruth)
    throw InputError("log_density: " + estimator_name(kind) + " is not a pointwise estimator");
  const bool fwd = quantity_ == EmulatedQuantity::ForwardModel;
  if (fwd && (kind == EstimatorKind::Quantile || kind == EstimatorKind::Mode))
    throw InputError("estimator " + estimator_name(kind) + " requires a log-density emulator");
  if (kind == EstimatorKind::Quantile && !(alpha > 0.0 && alpha < 1.0))
    throw InputError("quantile level must lie in (0, 1)");

  const PointwisePrediction pred = predict(points);
  VectorXd out(points.rows());
  for (Index i = 0; i < points.rows(); ++i) {
    const double lp = pred.log_prior(i);
    if (!std::isfinite(lp)) {
      out(i) = kNegInf;
      continue;
    }
    if (fwd) {
      const VectorXd m = pred.mean.row(i).transpose();
      const VectorXd v = pred.variance.row(i).transpose();
      switch (kind) {
        case EstimatorKind::PlugIn:
          out(i) = lp + (*likelihood_)(m);
          break;
        case EstimatorKind::Eup:
          out(i) = log_eup_fwd(lp, m, v, problem_->observation, problem_->noise_cov);
          break;
        default:
          out(i) = expected_loglik_fwd(lp, m, v, problem_->observation, problem_->noise_cov);
          break;
      }
    } else {
      const double m = pred.mean(i, 0);
      const double v = pred.variance(i, 0);
      switch (kind) {
        case EstimatorKind::Eup:
          out(i) = log_eup_ldens(lp, m, v);
          break;
        case EstimatorKind::Quantile:
          out(i) = log_quantile_ldens(lp, m, v, alpha);
          break;
        case EstimatorKind::Mode:
          out(i) = log_mode_ldens(lp, m, v);
          break;
        default:  // plug-in; E[log L] = m as well
          out(i) = lp + m;
          break;
      }
    }
  }
  return out;
}

double SurrogatePosterior::log_density(EstimatorKind kind, const VectorXd& theta, double alpha) const {
  return log_density(kind, MatrixXd(theta.transpose()), alpha)(0);
}

double log_eup_fwd(double log_prior, const VectorXd& mean, const VectorXd& var, const VectorXd& y_obs,
                   const MatrixXd& noise_cov) {
  check_fwd_args(mean, var, y_obs, noise_cov);
  if (!std::isfinite(log_prior)) return kNegInf;
  MatrixXd c = noise_cov;
  c.diagonal() += var;
  return log_prior + log_normal_with_factor(y_obs - mean, factor_or_throw(c, "log_eup_fwd"));
}

PushforwardMoments pushforward_moments_fwd(double log_prior, const VectorXd& mean, const VectorXd& var,
                                           const VectorXd& y_obs, const MatrixXd& noise_cov) {
  check_fwd_args(mean, var, y_obs, noise_cov);
  PushforwardMoments out;
  out.log_mean = log_eup_fwd(log_prior, mean, var, y_obs, noise_cov);
  if (!std::isfinite(log_prior)) {
    out.log_variance = kNegInf;
    return out;
  }
  const double p = static_cast<double>(y_obs.size());
  const VectorXd r = y_obs - mean;
  MatrixXd c1 = 0.5 * noise_cov;
  c1.diagonal() += var;
  MatrixXd total = noise_cov;
  total.diagonal() += var;
  const MatrixXd c2 = 0.5 * total;
  const MatrixXd l_noise = factor_or_throw(noise_cov, "pushforward_moments_fwd");
  const MatrixXd l_total = factor_or_throw(total, "pushforward_moments_fwd");
  const double log_t1 = log_normal_with_factor(r, factor_or_throw(c1, "pushforward_moments_fwd")) -
                        0.5 * p * std::log(2.0) - 0.5 * log_det_2pi(l_noise);
  const double log_t2 = log_normal_with_factor(r, factor_or_throw(c2, "pushforward_moments_fwd")) -
                        0.5 * p * std::log(2.0) - 0.5 * log_det_2pi(l_total);
  out.log_variance = 2.0 * log_prior + log_diff_exp(log_t1, log_t2);
  out.mean = safe_exp(out.log_mean, out.overflow);
  out.variance = safe_exp(out.log_variance, out.overflow);
  return out;
}

PushforwardMoments pushforward_moments_ldens(double log_prior, double mean, double var) {
  PushforwardMoments out;
  if (!std::isfinite(log_prior)) {
    out.log_mean = out.log_variance = kNegInf;
    return out;
  }
  out.log_mean = log_prior + mean + 0.5 * var;
  out.log_variance = var > 0.0 ? 2.0 * log_prior + 2.0 * mean + var + std::log(std::expm1(var)) : kNegInf;
  out.mean = safe_exp(out.log_mean, out.overflow);
  out.variance = safe_exp(out.log_variance, out.overflow);
  if (out.overflow) logger()->debug("log-normal pushforward moments overflow (m={}, s2={})", mean, var);
  return out;
}

double log_eup_ldens(double log_prior, double mean, double var) { return log_prior + mean + 0.5 * var; }

double log_quantile_ldens(double log_prior, double mean, double var, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("quantile level must lie in (0, 1)");
  const double q = alpha == 0.5 ? 0.0 : normal_quantile(alpha);
  return log_prior + mean + q * std::sqrt(std::max(var, 0.0));
}

double log_mode_ldens(double log_prior, double mean, double var) { return log_prior + mean - var; }

double expected_loglik_fwd(double log_prior, const VectorXd& mean, const VectorXd& var, const VectorXd& y_obs,
                           const MatrixXd& noise_cov) {
  check_fwd_args(mean, var, y_obs, noise_cov);
  if (!std::isfinite(log_prior)) return kNegInf;
  const MatrixXd l = factor_or_throw(noise_cov, "expected_loglik_fwd");
  const MatrixXd linv = l.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(l.rows(), l.cols()));
  const VectorXd prec_diag = linv.colwise().squaredNorm().transpose();  // diag of Sigma^{-1}
  return log_prior + log_normal_with_factor(y_obs - mean, l) - 0.5 * prec_diag.dot(var);
}

PushforwardMoments pushforward_moments(const SurrogatePosterior& sp, const VectorXd& theta) {
  const PointwisePrediction pred = sp.predict(MatrixXd(theta.transpose()));
  if (sp.quantity() == EmulatedQuantity::ForwardModel)
    return pushforward_moments_fwd(pred.log_prior(0), pred.mean.row(0).transpose(), pred.variance.row(0).transpose(),
                                   sp.problem().observation, sp.problem().noise_cov);
  return pushforward_moments_ldens(pred.log_prior(0), pred.mean(0, 0), pred.variance(0, 0));
}

Moments PosteriorEstimate::moments() const {
  if (is_grid()) return grid_moments(density, grid);
  return sample_moments(samples, weights);
}

PosteriorEstimate estimate_on_grid(const SurrogatePosterior& sp, EstimatorKind kind, const Grid& grid, double alpha) {
  if (grid.dim() != sp.dim()) throw InputError("estimate_on_grid: grid dimension does not match the problem");
  const VectorXd lv = sp.log_density(kind, grid.points(), alpha);
  if (!std::isfinite(lv.maxCoeff()))
    throw DegenerateEstimateError("estimate_on_grid: surrogate density vanishes on the whole grid");
  PosteriorEstimate est;
  est.kind = kind;
  est.alpha = alpha;
  est.representation = PosteriorEstimate::Representation::GridDensity;
  est.grid = grid;
  est.density = normalize_on_grid(lv, grid);
  return est;
}

PosteriorEstimate estimate_by_mcmc(const SurrogatePosterior& sp, EstimatorKind kind, const MhConfig& config,
                                   double alpha) {
  const Chain chain =
      rwmh([&](const VectorXd& x) { return sp.log_density(kind, x, alpha); }, sp.problem().prior, config);
  PosteriorEstimate est;
  est.kind = kind;
  est.alpha = alpha;
  est.representation = PosteriorEstimate::Representation::Samples;
  est.samples = chain.retained();
  est.trajectory.assign(static_cast<std::size_t>(est.samples.rows()), 0);
  est.seed = config.seed;
  return est;
}

PosteriorEstimate estimate_plug_in(const SurrogatePosterior& sp, const Grid& grid) {
  return estimate_on_grid(sp, EstimatorKind::PlugIn, grid);
}

PosteriorEstimate estimate_eup(const SurrogatePosterior& sp, const Grid& grid) {
  return estimate_on_grid(sp, EstimatorKind::Eup, grid);
}

namespace {

// Log unnormalised density of one trajectory, given the trajectory's emulator outputs (rows: points).
VectorXd trajectory_log_density(const SurrogatePosterior& sp, const VectorXd& log_prior, const MatrixXd& values,
                                const GaussianLikelihood* lik) {
  VectorXd out(values.rows());
  for (Index i = 0; i < values.rows(); ++i) {
    if (!std::isfinite(log_prior(i))) {
      out(i) = kNegInf;
    } else if (sp.quantity() == EmulatedQuantity::ForwardModel) {
      out(i) = log_prior(i) + (*lik)(values.row(i).transpose());
    } else {
      out(i) = log_prior(i) + values(i, 0);
    }
  }
  return out;
}

double variance_scale(const SurrogatePosterior& sp) {
  const auto& adj = sp.adjustment();
  if (adj.fixed) throw InputError("trajectory sampling does not support a fixed variance override");
  return adj.scale;
}

// Grid-mode state shared by EP sampling and the grid mixture.
struct GridEp {
  std::vector<GridTrajectorySampler> samplers;
  VectorXd log_prior;
  std::unique_ptr<GaussianLikelihood> lik;
  double sd_scale = 1.0;

  GridEp(const SurrogatePosterior& sp, const Grid& grid) {
    if (grid.dim() != sp.dim()) throw InputError("EP: grid dimension does not match the problem");
    for (const auto& gp : sp.emulator().components()) samplers.emplace_back(gp, grid.points());
    log_prior = sp.problem().prior.log_density_rows(grid.points());
    if (sp.quantity() == EmulatedQuantity::ForwardModel)
      lik = std::make_unique<GaussianLikelihood>(sp.problem().observation, sp.problem().noise_cov);
    sd_scale = std::sqrt(variance_scale(sp));
  }

  // Normalised density of trajectory k; consumes rng.
  VectorXd density(const SurrogatePosterior& sp, const Grid& grid, Rng& rng) const {
    MatrixXd values(grid.size(), static_cast<Index>(samplers.size()));
    for (std::size_t p = 0; p < samplers.size(); ++p) {
      const VectorXd draw = samplers[p].sample_values(rng);
      values.col(static_cast<Index>(p)) = samplers[p].mean() + sd_scale * (draw - samplers[p].mean());
    }
    const VectorXd lv = trajectory_log_density(sp, log_prior, values, lik.get());
    if (!std::isfinite(lv.maxCoeff())) throw DegenerateEstimateError("EP: trajectory density vanishes on the grid");
    return normalize_on_grid(lv, grid);
  }
};

Index draw_node(const VectorXd& density, const Grid& grid, Rng& rng) {
  const VectorXd mass = density.cwiseProduct(grid.weights());
  const double u = rng.uniform() * mass.sum();
  double acc = 0.0;
  for (Index i = 0; i < mass.size(); ++i) {
    acc += mass(i);
    if (u < acc) return i;
  }
  return mass.size() - 1;
}

}  // namespace

PosteriorEstimate sample_ep(const SurrogatePosterior& sp, const EpOptions& options, Rng& rng) {
  if (options.trajectories < 1 || options.draws < 1) throw InputError("sample_ep: K and M must be positive");
  if (!(options.burn_in >= 0.0 && options.burn_in < 1.0)) throw InputError("sample_ep: burn_in must lie in [0, 1)");
  const Index k_total = options.trajectories;
  const Index m = options.draws;
  const Index d = sp.dim();
  const Index steps = static_cast<Index>(std::ceil(static_cast<double>(m) / (1.0 - options.burn_in)));
  const Prior& prior = sp.problem().prior;
  const Rng root = rng.split(0);

  PosteriorEstimate est;
  est.kind = EstimatorKind::Ep;
  est.representation = PosteriorEstimate::Representation::Samples;
  est.samples.resize(k_total * m, d);
  est.trajectory.resize(static_cast<std::size_t>(k_total * m));
  est.trajectories = k_total;
  est.draws_per_trajectory = m;
  est.seed = rng.seed();

  MhConfig mh;
  mh.steps = steps;
  mh.burn_in = std::max(options.burn_in, 1e-9);

  if (options.mode == TrajectoryOptions::Mode::Grid) {
    const Grid& grid = options.grid;
    const GridEp ep(sp, grid);
    parallel_for(
        static_cast<std::size_t>(k_total),
        [&](std::size_t k) {
          Rng tr = root.split(k);
          const VectorXd dens = ep.density(sp, grid, tr);
          MhConfig cfg = mh;
          cfg.initial_state = grid.points().row(draw_node(dens, grid, tr)).transpose();
          const Chain chain = rwmh([&](const VectorXd& x) { return std::log(grid.interpolate(dens, x)); }, prior, cfg, tr);
          const Index off = static_cast<Index>(k) * m;
          est.samples.middleRows(off, m) = chain.states.bottomRows(m);
          for (Index i = 0; i < m; ++i) est.trajectory[static_cast<std::size_t>(off + i)] = static_cast<Index>(k);
        },
        options.threads);
    return est;
  }

  const double sd_scale = std::sqrt(variance_scale(sp));
  std::unique_ptr<GaussianLikelihood> lik;
  if (sp.quantity() == EmulatedQuantity::ForwardModel)
    lik = std::make_unique<GaussianLikelihood>(sp.problem().observation, sp.problem().noise_cov);
  parallel_for(
      static_cast<std::size_t>(k_total),
      [&](std::size_t k) {
        Rng tr = root.split(k);
        TrajectoryOptions topt;
        topt.mode = TrajectoryOptions::Mode::Feature;
        topt.features = options.features;
        std::vector<TrajectoryRealization> paths;
        for (const auto& gp : sp.emulator().components()) paths.push_back(sample_trajectory(gp, topt, tr));
        auto eval_rows = [&](const MatrixXd& pts) {
          MatrixXd values(pts.rows(), static_cast<Index>(paths.size()));
          for (std::size_t p = 0; p < paths.size(); ++p) {
            const GpEmulator& gp = sp.emulator().output(static_cast<Index>(p));
            VectorXd v = paths[p].evaluate(pts);
            if (sd_scale != 1.0) {
              const VectorXd mean = gp.predict_marginal(pts).mean;
              v = mean + sd_scale * (v - mean);
            }
            values.col(static_cast<Index>(p)) = v;
          }
          return trajectory_log_density(sp, prior.log_density_rows(pts), values, lik.get());
        };
        // Sampling-importance-resampling start from 256 prior draws.
        const MatrixXd cand = prior.sample(256, tr);
        const VectorXd lw = eval_rows(cand);
        if (!std::isfinite(lw.maxCoeff())) throw DegenerateEstimateError("EP: trajectory density vanishes at every start");
        const VectorXd w = (lw.array() - lw.maxCoeff()).exp();
        const double u = tr.uniform() * w.sum();
        Index pick = 0;
        for (double acc = w(0); acc <= u && pick + 1 < w.size(); acc += w(++pick)) {
        }
        MhConfig cfg = mh;
        cfg.initial_state = cand.row(pick).transpose();
        const Chain chain =
            rwmh([&](const VectorXd& x) { return eval_rows(MatrixXd(x.transpose()))(0); }, prior, cfg, tr);
        const Index off = static_cast<Index>(k) * m;
        est.samples.middleRows(off, m) = chain.states.bottomRows(m);
        for (Index i = 0; i < m; ++i) est.trajectory[static_cast<std::size_t>(off + i)] = static_cast<Index>(k);
      },
      options.threads);
  return est;
}

PosteriorEstimate ep_grid_mixture(const SurrogatePosterior& sp, const Grid& grid, Index trajectories, Rng& rng) {
  if (trajectories < 1) throw InputError("ep_grid_mixture: K must be positive");
  const GridEp ep(sp, grid);
  const Rng root = rng.split(0);
  std::vector<VectorXd> dens(static_cast<std::size_t>(trajectories));
  parallel_for(static_cast<std::size_t>(trajectories), [&](std::size_t k) {
    Rng tr = root.split(k);
    dens[k] = ep.density(sp, grid, tr);
  });
  PosteriorEstimate est;
  est.kind = EstimatorKind::Ep;
  est.representation = PosteriorEstimate::Representation::GridDensity;
  est.grid = grid;
  est.density = VectorXd::Zero(grid.size());
  for (const auto& d : dens) est.density += d;
  est.density /= static_cast<double>(trajectories);
  est.trajectories = trajectories;
  est.seed = rng.seed();
  return est;
}

double tv_to_grid_density(const PosteriorEstimate& estimate, const VectorXd& density, const Grid& grid, Index bins) {
  if (!estimate.is_grid()) return tv_samples_to_grid(estimate.samples, density, grid, bins);
  if (estimate.grid.size() == grid.size() && estimate.grid.points() == grid.points())
    return tv_distance(estimate.density, density, grid);
  VectorXd mapped(grid.size());
  for (Index i = 0; i < grid.size(); ++i) mapped(i) = estimate.grid.interpolate(estimate.density, grid.points().row(i).transpose());
  mapped /= grid.integrate(mapped);
  return tv_distance(mapped, density, grid);
}

}  // namespace surro
