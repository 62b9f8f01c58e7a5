#include "surro/active_learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "surro/errors.hpp"
#include "surro/log.hpp"
#include "surro/parallel.hpp"

namespace surro {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLogMax = std::log(std::numeric_limits<double>::max());

MatrixXd factor_or_throw(const MatrixXd& c, const char* what) {
  Eigen::LLT<MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) throw FactorizationError(std::string(what) + ": covariance not positive definite");
  return llt.matrixL();
}

double log_normal_with_factor(const VectorXd& r, const MatrixXd& lower) {
  return -0.5 * (static_cast<double>(lower.rows()) * kLog2Pi + log_det_from_cholesky(lower)) -
         0.5 * lower.triangularView<Eigen::Lower>().solve(r).squaredNorm();
}

double half_log_det_2pi(const MatrixXd& lower) {
  return 0.5 * (static_cast<double>(lower.rows()) * kLog2Pi + log_det_from_cholesky(lower));
}

double log_diff_exp(double a, double b) {
  if (!(b < a)) return kNegInf;
  if (!std::isfinite(b)) return a;
  return a + std::log1p(-std::exp(b - a));
}

void require(const SurrogatePosterior& sp, EmulatedQuantity q, const char* what) {
  if (sp.quantity() != q)
    throw InputError(std::string(what) + (q == EmulatedQuantity::LogLikelihood ? ": requires a log-density emulator"
                                                                               : ": requires a forward-model emulator"));
}

void check_batch(const SurrogatePosterior& sp, const MatrixXd& batch, const RhoMeasure& rho) {
  if (batch.rows() > 0 && batch.cols() != sp.dim()) throw InputError("acquisition: batch dimension mismatch");
  rho.validate(sp.dim());
}

// Sum of w_j exp(log_j), skipping -inf and overflowing nodes.
AcquisitionValue weighted_sum(const VectorXd& logs, const VectorXd& weights) {
  AcquisitionValue out;
  for (Index j = 0; j < logs.size(); ++j) {
    if (logs(j) == kNegInf || weights(j) == 0.0) continue;
    if (!(logs(j) < kLogMax)) {
      ++out.overflowed;
      continue;
    }
    out.value += weights(j) * std::exp(logs(j));
  }
  return out;
}

}  // namespace

void Acquisition::validate() const {
  if (!(mix_weight >= 0.0 && mix_weight <= 1.0)) throw InputError("acquisition mix_weight must lie in [0, 1]");
}

std::string acquisition_name(AcquisitionKind kind) {
  switch (kind) {
    case AcquisitionKind::MaxVarLdens:
      return "maxvar_ldens";
    case AcquisitionKind::EcuVarLdens:
      return "ecu_var_ldens";
    case AcquisitionKind::EcuVarFwd:
      return "ecu_var_fwd";
    case AcquisitionKind::WeightedIvar:
      return "weighted_ivar";
    case AcquisitionKind::PosteriorSample:
      return "posterior_sample";
    case AcquisitionKind::Random:
      return "random";
  }
  return "unknown";
}

AcquisitionKind parse_acquisition(const std::string& name) {
  for (auto k : {AcquisitionKind::MaxVarLdens, AcquisitionKind::EcuVarLdens, AcquisitionKind::EcuVarFwd,
                 AcquisitionKind::WeightedIvar, AcquisitionKind::PosteriorSample, AcquisitionKind::Random})
    if (acquisition_name(k) == name) return k;
  throw InputError("unknown acquisition '" + name + "'");
}

std::string strategy_name(BatchStrategy strategy) {
  switch (strategy) {
    case BatchStrategy::Exhaustive:
      return "exhaustive";
    case BatchStrategy::KrigingBeliever:
      return "kriging_believer";
    case BatchStrategy::ConstantLiar:
      return "constant_liar";
    case BatchStrategy::DirectSampling:
      return "direct_sampling";
  }
  return "unknown";
}

BatchStrategy parse_strategy(const std::string& name) {
  for (auto s : {BatchStrategy::Exhaustive, BatchStrategy::KrigingBeliever, BatchStrategy::ConstantLiar,
                 BatchStrategy::DirectSampling})
    if (strategy_name(s) == name) return s;
  throw InputError("unknown batch strategy '" + name + "'");
}

RhoMeasure RhoMeasure::prior_samples(const Prior& prior, Index j, Rng& rng) {
  if (j < 1) throw InputError("rho: need at least one node");
  RhoMeasure rho;
  rho.points = prior.sample(j, rng);
  rho.weights = VectorXd::Constant(j, 1.0 / static_cast<double>(j));
  return rho;
}

RhoMeasure RhoMeasure::grid(const Grid& grid) {
  RhoMeasure rho;
  rho.points = grid.points();
  rho.weights = grid.weights() / grid.weights().sum();
  return rho;
}

RhoMeasure RhoMeasure::eup_weighted(const SurrogatePosterior& sp, Index j, Rng& rng) {
  RhoMeasure rho = prior_samples(sp.problem().prior, j, rng);
  const VectorXd log_eup = sp.log_density(EstimatorKind::Eup, rho.points);
  const VectorXd lp = sp.problem().prior.log_density_rows(rho.points);
  const VectorXd lw = log_eup - lp;
  const double top = lw.maxCoeff();
  if (!std::isfinite(top)) throw DegenerateEstimateError("rho: EUP weights vanish at every prior draw");
  rho.weights = (lw.array() - top).exp();
  rho.weights /= rho.weights.sum();
  rho.degenerate = rho.weights.maxCoeff() > 0.99;
  if (rho.effective_size() < static_cast<double>(j) / 10.0)
    logger()->warn("EUP-weighted rho has effective size {:.1f} of {}", rho.effective_size(), j);
  return rho;
}

void RhoMeasure::validate(Index dim) const {
  if (points.rows() < 1 || points.cols() != dim) throw InputError("rho: points must be J x D with J >= 1");
  if (weights.size() != points.rows()) throw InputError("rho: one weight per point");
  if (!(weights.array() >= 0.0).all() || std::abs(weights.sum() - 1.0) > 1e-9)
    throw InputError("rho: weights must be nonnegative and sum to one");
}

double RhoMeasure::effective_size() const { return 1.0 / weights.squaredNorm(); }

double log_ecu_ldens_node(double log_prior, double mean, double var, double var_after, double tau_power) {
  if (!std::isfinite(log_prior) || !(var_after > 0.0)) return kNegInf;
  const double log_var_after = 2.0 * log_prior + 2.0 * mean + var_after + std::log(std::expm1(var_after));
  const double log_tau = 2.0 * (var - var_after);
  return log_var_after + tau_power * log_tau;
}

double log_ecu_fwd_node(double log_prior, const VectorXd& mean, const VectorXd& var, const VectorXd& var_after,
                        const VectorXd& y_obs, const MatrixXd& noise_cov) {
  if (!std::isfinite(log_prior)) return kNegInf;
  const double p = static_cast<double>(y_obs.size());
  const VectorXd r = y_obs - mean;
  MatrixXd cov_n = noise_cov;
  cov_n.diagonal() += var;
  MatrixXd cov_nb = noise_cov;
  cov_nb.diagonal() += var_after;
  const MatrixXd c1 = cov_n - 0.5 * noise_cov;
  const MatrixXd c2 = cov_n - 0.5 * cov_nb;
  const double shift = 0.5 * p * std::log(2.0);
  const double t1 = log_normal_with_factor(r, factor_or_throw(c1, "ecu_var_fwd")) - shift -
                    half_log_det_2pi(factor_or_throw(noise_cov, "ecu_var_fwd"));
  const double t2 = log_normal_with_factor(r, factor_or_throw(c2, "ecu_var_fwd")) - shift -
                    half_log_det_2pi(factor_or_throw(cov_nb, "ecu_var_fwd"));
  return 2.0 * log_prior + log_diff_exp(t1, t2);
}

AcquisitionValue acq_maxvar_ldens(const SurrogatePosterior& sp, const VectorXd& theta) {
  require(sp, EmulatedQuantity::LogLikelihood, "maxvar_ldens");
  const auto m = pushforward_moments(sp, theta);
  AcquisitionValue out;
  if (m.overflow) {
    out.value = kNegInf;
    out.overflowed = 1;
  } else {
    out.value = -m.variance;
  }
  return out;
}

AcquisitionValue acq_ecu_var_ldens(const SurrogatePosterior& sp, const MatrixXd& batch, const RhoMeasure& rho) {
  require(sp, EmulatedQuantity::LogLikelihood, "ecu_var_ldens");
  check_batch(sp, batch, rho);
  const GpEmulator& gp = sp.emulator().output(0);
  const WhitenedPoints q = gp.whiten(rho.points);
  const VectorXd after = batch.rows() == 0 ? q.variance : gp.conditional_variance(gp.whiten(batch), q);
  const VectorXd lp = sp.problem().prior.log_density_rows(rho.points);
  VectorXd logs(rho.points.rows());
  for (Index j = 0; j < logs.size(); ++j) logs(j) = log_ecu_ldens_node(lp(j), q.mean(j), q.variance(j), after(j));
  return weighted_sum(logs, rho.weights);
}

AcquisitionValue acq_ecu_var_fwd(const SurrogatePosterior& sp, const MatrixXd& batch, const RhoMeasure& rho) {
  require(sp, EmulatedQuantity::ForwardModel, "ecu_var_fwd");
  check_batch(sp, batch, rho);
  const auto [mean, var] = sp.emulator().predict_marginal(rho.points);
  const MatrixXd after = batch.rows() == 0 ? var : sp.emulator().conditional_variance(batch, rho.points);
  const VectorXd lp = sp.problem().prior.log_density_rows(rho.points);
  VectorXd logs(rho.points.rows());
  for (Index j = 0; j < logs.size(); ++j)
    logs(j) = log_ecu_fwd_node(lp(j), mean.row(j).transpose(), var.row(j).transpose(), after.row(j).transpose(),
                               sp.problem().observation, sp.problem().noise_cov);
  return weighted_sum(logs, rho.weights);
}

AcquisitionValue acq_weighted_ivar(const SurrogatePosterior& sp, const MatrixXd& batch, const RhoMeasure& rho) {
  check_batch(sp, batch, rho);
  const MatrixXd after = batch.rows() == 0 ? sp.emulator().predict_marginal(rho.points).second
                                           : sp.emulator().conditional_variance(batch, rho.points);
  AcquisitionValue out;
  out.value = rho.weights.dot(after.rowwise().sum());
  return out;
}

double integrated_variance(const SurrogatePosterior& sp, const RhoMeasure& rho) {
  rho.validate(sp.dim());
  double total = 0.0;
  for (Index j = 0; j < rho.points.rows(); ++j) {
    const auto m = pushforward_moments(sp, rho.points.row(j).transpose());
    if (!m.overflow) total += rho.weights(j) * m.variance;
  }
  return total;
}

AcquisitionValue evaluate_acquisition(AcquisitionKind kind, const SurrogatePosterior& sp, const MatrixXd& batch,
                                      const RhoMeasure& rho) {
  switch (kind) {
    case AcquisitionKind::MaxVarLdens: {
      AcquisitionValue out;
      for (Index i = 0; i < batch.rows(); ++i) {
        const auto v = acq_maxvar_ldens(sp, batch.row(i).transpose());
        out.value += v.value;
        out.overflowed += v.overflowed;
      }
      return out;
    }
    case AcquisitionKind::EcuVarLdens:
      return acq_ecu_var_ldens(sp, batch, rho);
    case AcquisitionKind::EcuVarFwd:
      return acq_ecu_var_fwd(sp, batch, rho);
    case AcquisitionKind::WeightedIvar:
      return acq_weighted_ivar(sp, batch, rho);
    default:
      throw InputError("acquisition " + acquisition_name(kind) + " is not a criterion");
  }
}

BatchSelection optimize_batch(const Acquisition& acq, const SurrogatePosterior& sp, Index batch_size,
                              const BatchOptions& options, const MatrixXd& candidates, const RhoMeasure& rho) {
  acq.validate();
  if (!acq.is_criterion()) throw InputError("optimize_batch: " + acquisition_name(acq.kind) + " has no criterion");
  if (options.strategy == BatchStrategy::DirectSampling)
    throw InputError("optimize_batch: direct sampling does not search candidates");
  if (batch_size < 1) throw InputError("optimize_batch: batch size must be positive");
  if (candidates.rows() < batch_size) throw InputError("optimize_batch: fewer candidates than batch points");
  if (candidates.cols() != sp.dim()) throw InputError("optimize_batch: candidate dimension mismatch");

  const Index n = candidates.rows();
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  BatchSelection out;
  out.points.resize(batch_size, sp.dim());
  out.values.resize(batch_size);
  SurrogatePosterior current = sp;
  Index chosen = 0;
  while (chosen < batch_size) {
    VectorXd values(n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
      const Index c = static_cast<Index>(i);
      values(c) = used[i] ? kInf
                          : evaluate_acquisition(acq.kind, current, MatrixXd(candidates.row(c)), rho).value;
    });
    Index best = -1;
    double best_value = kInf;
    for (Index c = 0; c < n; ++c) {
      if (used[static_cast<std::size_t>(c)] || std::isnan(values(c))) continue;
      if (best < 0 || values(c) < best_value) {
        best = c;
        best_value = values(c);
      }
    }
    if (best < 0) throw DegenerateEstimateError("optimize_batch: no admissible candidate left");
    used[static_cast<std::size_t>(best)] = true;
    const MatrixXd point = candidates.row(best);
    if (chosen + 1 < batch_size) {
      MatrixXd pseudo;
      if (options.strategy == BatchStrategy::ConstantLiar) {
        pseudo.resize(1, current.emulator().outputs());
        for (Index p = 0; p < pseudo.cols(); ++p)
          pseudo(0, p) = options.liar ? *options.liar : current.emulator().output(p).responses().minCoeff();
      } else {
        pseudo = current.emulator().predict_marginal(point).first;
      }
      try {
        current = SurrogatePosterior(current.problem_ptr(), current.emulator().update(point, pseudo),
                                     current.adjustment());
      } catch (const DegenerateUpdateError&) {
        logger()->debug("optimize_batch: candidate {} duplicates the design, skipped", best);
        continue;
      }
    }
    out.points.row(chosen) = point;
    out.values(chosen) = best_value;
    ++chosen;
  }
  return out;
}

MatrixXd sample_grid_density(const VectorXd& density, const Grid& grid, Index n, Rng& rng) {
  if (density.size() != grid.size()) throw InputError("sample_grid_density: density size mismatch");
  const Index d = grid.dim();
  if (d != 1 && d != 2) throw InputError("sample_grid_density: one- or two-dimensional grids only");
  const VectorXd& a0 = grid.axes()[0];
  const Index n0 = a0.size();
  const Index n1 = d == 2 ? grid.nodes(1) : 1;
  const VectorXd a1 = d == 2 ? grid.axes()[1] : VectorXd::Zero(1);
  const Index c0 = n0 - 1, c1 = d == 2 ? n1 - 1 : 1;

  // Cells carry the exact integral of the (bi)linear interpolant: volume times mean corner value.
  auto corners = [&](Index i, Index j) {
    std::vector<double> v;
    if (d == 1) {
      v = {density(i), density(i + 1)};
    } else {
      v = {density(i * n1 + j), density(i * n1 + j + 1), density((i + 1) * n1 + j), density((i + 1) * n1 + j + 1)};
    }
    return v;
  };
  VectorXd cumulative(c0 * c1);
  double acc = 0.0;
  for (Index i = 0; i < c0; ++i)
    for (Index j = 0; j < c1; ++j) {
      const auto v = corners(i, j);
      double vol = a0(i + 1) - a0(i);
      if (d == 2) vol *= a1(j + 1) - a1(j);
      const double mass = std::max(0.0, vol * std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()));
      acc += mass;
      cumulative(i * c1 + j) = acc;
    }
  if (!(acc > 0.0) || !std::isfinite(acc)) throw InputError("sample_grid_density: density has no mass");

  MatrixXd out(n, d);
  for (Index s = 0; s < n; ++s) {
    const double u = rng.uniform() * acc;
    const Index cell = std::min<Index>(
        static_cast<Index>(std::upper_bound(cumulative.data(), cumulative.data() + cumulative.size(), u) -
                           cumulative.data()),
        cumulative.size() - 1);
    const Index i = cell / c1, j = cell % c1;
    const auto v = corners(i, j);
    const double top = *std::max_element(v.begin(), v.end());
    VectorXd x(d);
    for (;;) {
      x(0) = rng.uniform(a0(i), a0(i + 1));
      if (d == 2) x(1) = rng.uniform(a1(j), a1(j + 1));
      if (rng.uniform() * top <= grid.interpolate(density, x)) break;
    }
    out.row(s) = x.transpose();
  }
  return out;
}

MatrixXd sample_batch(const PosteriorEstimate& estimate, const Prior& prior, Index batch_size, double mix_weight,
                      Rng& rng, const MatrixXd& design, const VectorXd& lengthscales) {
  if (!(mix_weight >= 0.0 && mix_weight <= 1.0)) throw InputError("sample_batch: mix_weight must lie in [0, 1]");
  if (batch_size < 1) throw InputError("sample_batch: batch size must be positive");
  const Index d = prior.dim();
  if (mix_weight > 0.0 && !estimate.is_grid() && estimate.samples.rows() == 0)
    throw InputError("sample_batch: the posterior estimate has no samples");
  const VectorXd ell = lengthscales.size() == d ? lengthscales : VectorXd(prior.upper() - prior.lower());

  MatrixXd out(batch_size, d);
  for (Index b = 0; b < batch_size; ++b) {
    VectorXd x;
    if (rng.uniform() < mix_weight) {
      if (estimate.is_grid()) {
        x = sample_grid_density(estimate.density, estimate.grid, 1, rng).row(0).transpose();
      } else if (estimate.weights.size() == estimate.samples.rows()) {
        const double u = rng.uniform() * estimate.weights.sum();
        Index k = 0;
        for (double c = estimate.weights(0); c <= u && k + 1 < estimate.weights.size(); c += estimate.weights(++k)) {
        }
        x = estimate.samples.row(k).transpose();
      } else {
        const auto k = static_cast<Index>(rng.uniform() * static_cast<double>(estimate.samples.rows()));
        x = estimate.samples.row(std::min(k, estimate.samples.rows() - 1)).transpose();
      }
    } else {
      x = prior.sample(rng);
    }
    auto clashes = [&](const VectorXd& p) {
      for (Index i = 0; i < design.rows(); ++i)
        if (design.cols() == d && design.row(i).transpose() == p) return true;
      for (Index i = 0; i < b; ++i)
        if (out.row(i).transpose() == p) return true;
      return false;
    };
    for (int attempt = 0; attempt < 8 && clashes(x); ++attempt) {
      VectorXd moved = x + 1e-6 * ell;
      if (!prior.contains(moved)) moved = x - 1e-6 * ell;
      x = moved;
    }
    out.row(b) = x.transpose();
  }
  return out;
}

std::vector<double> tempering_schedule(Index rounds) {
  if (rounds < 0) throw InputError("tempering: rounds must be nonnegative");
  if (rounds == 0) return {1.0};
  std::vector<double> beta(static_cast<std::size_t>(rounds + 1));
  for (Index t = 0; t <= rounds; ++t) {
    const double r = static_cast<double>(t) / static_cast<double>(rounds);
    beta[static_cast<std::size_t>(t)] = r * r;
  }
  return beta;
}

VectorXd temper_responses(const VectorXd& log_likelihoods, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw InputError("tempering: beta must lie in (0, 1]");
  return beta * log_likelihoods;
}

void ActiveLearningConfig::validate() const {
  if (initial_design < 3) throw ConfigError("active learning: initial_design must be at least 3");
  if (rounds < 0) throw ConfigError("active learning: rounds must be nonnegative");
  if (batch_size < 1) throw ConfigError("active learning: batch_size must be positive");
  if (rho_samples < 1) throw ConfigError("active learning: rho_samples must be positive");
  if (acquisition.is_criterion() && batch.candidates < batch_size)
    throw ConfigError("active learning: candidate set smaller than the batch");
  if (!(acquisition.mix_weight >= 0.0 && acquisition.mix_weight <= 1.0))
    throw ConfigError("active learning: mix_weight must lie in [0, 1]");
  if (estimator == EstimatorKind::Quantile && !(quantile_alpha > 0.0 && quantile_alpha < 1.0))
    throw ConfigError("active learning: quantile alpha must lie in (0, 1)");
  if (ep_trajectories < 1) throw ConfigError("active learning: ep_trajectories must be positive");
  if (oracle_nodes < 32) throw ConfigError("active learning: oracle_nodes must be at least 32");
}

EmulatedQuantity emulated_quantity(const InverseProblem& problem) {
  return std::holds_alternative<ForwardModelTarget>(problem.target) ? EmulatedQuantity::ForwardModel
                                                                    : EmulatedQuantity::LogLikelihood;
}

MultiOutputGp fit_emulator(const MatrixXd& x, const MatrixXd& y, const HyperparameterOptions& options,
                           std::vector<HyperparameterFit>* fits, const std::vector<HyperparameterFit>* reuse) {
  if (y.rows() != x.rows()) throw InputError("fit_emulator: one response row per design point");
  if (reuse && static_cast<Index>(reuse->size()) != y.cols()) throw InputError("fit_emulator: one fit per output");
  std::vector<GpEmulator> gps;
  std::vector<HyperparameterFit> out;
  for (Index p = 0; p < y.cols(); ++p) {
    HyperparameterFit fit = reuse ? (*reuse)[static_cast<std::size_t>(p)] : optimize_hyperparameters(x, y.col(p), options);
    gps.push_back(fit_gp(x, y.col(p), fit));
    out.push_back(std::move(fit));
  }
  if (fits) *fits = std::move(out);
  return MultiOutputGp(std::move(gps));
}

SurrogatePosterior tempered_surrogate(std::shared_ptr<const InverseProblem> problem, const MatrixXd& x,
                                      const MatrixXd& raw_responses, double beta, const HyperparameterOptions& options,
                                      const std::vector<HyperparameterFit>* reuse,
                                      std::vector<HyperparameterFit>* fits) {
  if (!(beta > 0.0 && beta <= 1.0)) throw InputError("tempering: beta must lie in (0, 1]");
  if (emulated_quantity(*problem) == EmulatedQuantity::ForwardModel) {
    MultiOutputGp gp = fit_emulator(x, raw_responses, options, fits, reuse);
    if (beta == 1.0) return SurrogatePosterior(problem, std::move(gp));
    auto tempered = std::make_shared<InverseProblem>(*problem);
    tempered->noise_cov = problem->noise_cov / beta;
    return SurrogatePosterior(tempered, std::move(gp));
  }
  const MatrixXd y = temper_responses(raw_responses.col(0), beta);
  if (reuse && beta != 1.0) {
    // Rescale a fit made for the untempered target.
    std::vector<HyperparameterFit> scaled = *reuse;
    for (auto& f : scaled) {
      f.kernel.signal_variance *= beta * beta;
      f.noise_variance *= beta * beta;
      f.mean.offset *= beta;
      f.mean.slope *= beta;
    }
    return SurrogatePosterior(problem, fit_emulator(x, y, options, fits, &scaled));
  }
  return SurrogatePosterior(problem, fit_emulator(x, y, options, fits, reuse));
}

std::optional<Grid> metric_grid(const InverseProblem& problem, const ActiveLearningConfig& config) {
  const Index d = problem.dim();
  if (d > 2) return std::nullopt;
  Index nodes = config.oracle_nodes;
  if (d == 2) nodes = std::min<Index>(nodes, config.estimator == EstimatorKind::Ep ? 32 : 64);
  return Grid::uniform(problem.prior.lower(), problem.prior.upper(), nodes);
}

double oracle_tv(const SurrogatePosterior& sp, const ActiveLearningConfig& config, const Grid& grid,
                 const VectorXd& oracle, Rng& rng) {
  try {
    if (config.estimator == EstimatorKind::Ep)
      return tv_distance(ep_grid_mixture(sp, grid, config.ep_trajectories, rng).density, oracle, grid);
    return tv_distance(estimate_on_grid(sp, config.estimator, grid, config.quantile_alpha).density, oracle, grid);
  } catch (const DegenerateEstimateError& e) {
    logger()->warn("oracle_tv: {}", e.what());
    return 1.0;
  }
}

namespace {

struct BatchOutcome {
  MatrixXd points;
  MatrixXd responses;
  Index dropped = 0;
  std::vector<Index> kept;
};

BatchOutcome simulate_batch(const MatrixXd& points, const InverseProblem& problem, const Rng& stream,
                            SimulationLedger& ledger, int threads) {
  const Index n = points.rows();
  const Index outputs = emulated_quantity(problem) == EmulatedQuantity::ForwardModel ? problem.outputs() : 1;
  std::vector<std::optional<VectorXd>> values(static_cast<std::size_t>(n));
  parallel_for(
      static_cast<std::size_t>(n),
      [&](std::size_t i) {
        Rng rng = stream.split(i);
        try {
          const SimObservation obs = simulate(points.row(static_cast<Index>(i)).transpose(), problem, rng, &ledger);
          if (obs.degenerate || !obs.value.allFinite()) {
            logger()->warn("simulation at batch point {} returned a non-finite value; dropped", i);
            return;
          }
          values[i] = obs.value;
        } catch (const std::exception& e) {
          logger()->warn("simulation at batch point {} failed: {}; dropped", i, e.what());
        }
      },
      threads);
  BatchOutcome out;
  for (Index i = 0; i < n; ++i)
    if (values[static_cast<std::size_t>(i)]) out.kept.push_back(i);
  out.dropped = n - static_cast<Index>(out.kept.size());
  out.points.resize(static_cast<Index>(out.kept.size()), points.cols());
  out.responses.resize(static_cast<Index>(out.kept.size()), outputs);
  for (std::size_t k = 0; k < out.kept.size(); ++k) {
    out.points.row(static_cast<Index>(k)) = points.row(out.kept[k]);
    out.responses.row(static_cast<Index>(k)) = values[static_cast<std::size_t>(out.kept[k])]->transpose();
  }
  return out;
}

MatrixXd stack(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() + b.rows(), std::max(a.cols(), b.cols()));
  if (a.rows() > 0) out.topRows(a.rows()) = a;
  if (b.rows() > 0) out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace

DesignHistory run_active_learning(std::shared_ptr<const InverseProblem> problem, const ActiveLearningConfig& config) {
  if (!problem) throw InputError("run_active_learning: no problem");
  config.validate();
  config.acquisition.validate();
  problem->validate();
  const EmulatedQuantity quantity = emulated_quantity(*problem);
  if (config.acquisition.kind == AcquisitionKind::EcuVarFwd && quantity != EmulatedQuantity::ForwardModel)
    throw ConfigError("ecu_var_fwd requires a forward-model target");
  if ((config.acquisition.kind == AcquisitionKind::EcuVarLdens || config.acquisition.kind == AcquisitionKind::MaxVarLdens) &&
      quantity != EmulatedQuantity::LogLikelihood)
    throw ConfigError(acquisition_name(config.acquisition.kind) + " requires a log-density target");

  HyperparameterOptions hyper = config.hyper;
  hyper.fit_noise = hyper.fit_noise || is_noisy(problem->target);

  const Rng root(config.seed);
  const Rng sim_root = root.split(2);
  SimulationLedger ledger;
  DesignHistory history;

  const std::optional<Grid> grid = metric_grid(*problem, config);
  VectorXd oracle;
  if (grid && problem->has_exact_likelihood()) oracle = grid_posterior_oracle(*problem, *grid);

  Rng init_rng = root.split(1);
  const MatrixXd init_points = problem->prior.sample(config.initial_design, init_rng);
  BatchOutcome init = simulate_batch(init_points, *problem, sim_root.split(0), ledger, config.threads);
  if (init.points.rows() < 3) throw InitializationError("active learning: fewer than three usable initial points");
  history.design = init.points;
  history.responses = init.responses;

  std::vector<HyperparameterFit> base_fits;
  auto metric_fit = [&](Index round) {
    std::vector<HyperparameterFit> fits;
    SurrogatePosterior sp = tempered_surrogate(problem, history.design, history.responses, 1.0, hyper,
                                               config.reoptimize || base_fits.empty() ? nullptr : &base_fits, &fits);
    if (base_fits.empty()) base_fits = fits;
    double tv = std::numeric_limits<double>::quiet_NaN();
    if (oracle.size() > 0) {
      Rng mrng = root.split(4).split(static_cast<std::uint64_t>(round));
      tv = oracle_tv(sp, config, *grid, oracle, mrng);
    }
    return std::make_pair(std::move(sp), tv);
  };

  auto [current, tv0] = metric_fit(0);
  {
    RoundRecord r;
    r.round = 0;
    r.beta = config.tempering ? 0.0 : 1.0;
    r.batch = init.points;
    r.responses = init.responses;
    r.acquisition = VectorXd::Constant(init.points.rows(), std::numeric_limits<double>::quiet_NaN());
    r.dropped = init.dropped;
    r.tv_to_oracle = tv0;
    r.cumulative_calls = ledger.total_calls();
    r.emulator = current.emulator();
    history.rounds.push_back(std::move(r));
  }

  const std::vector<double> schedule = tempering_schedule(config.rounds);
  for (Index t = 1; t <= config.rounds; ++t) {
    const double beta = config.tempering ? schedule[static_cast<std::size_t>(t)] : 1.0;
    const SurrogatePosterior selector =
        beta == 1.0 ? current
                    : tempered_surrogate(problem, history.design, history.responses, beta, hyper,
                                         config.reoptimize ? nullptr : &base_fits);
    Rng rng = root.split(3).split(static_cast<std::uint64_t>(t));

    MatrixXd batch;
    VectorXd acq_values = VectorXd::Constant(config.batch_size, std::numeric_limits<double>::quiet_NaN());
    if (config.acquisition.is_criterion()) {
      const MatrixXd candidates = problem->prior.sample(config.batch.candidates, rng);
      const RhoMeasure rho = config.acquisition.kind == AcquisitionKind::WeightedIvar
                                 ? RhoMeasure::eup_weighted(selector, config.rho_samples, rng)
                                 : RhoMeasure::prior_samples(problem->prior, config.rho_samples, rng);
      BatchOptions opts = config.batch;
      if (opts.strategy == BatchStrategy::DirectSampling) opts.strategy = BatchStrategy::KrigingBeliever;
      const BatchSelection sel = optimize_batch(config.acquisition, selector, config.batch_size, opts, candidates, rho);
      batch = sel.points;
      acq_values = sel.values;
    } else {
      const double w = config.acquisition.kind == AcquisitionKind::Random ? 0.0 : config.acquisition.mix_weight;
      PosteriorEstimate estimate;
      if (w > 0.0) {
        if (grid) {
          const EstimatorKind kind = config.estimator == EstimatorKind::GridTruth ? EstimatorKind::PlugIn : config.estimator;
          estimate = kind == EstimatorKind::Ep ? ep_grid_mixture(selector, *grid, config.ep_trajectories, rng)
                                               : estimate_on_grid(selector, kind, *grid, config.quantile_alpha);
        } else {
          MhConfig mh;
          mh.steps = 4000;
          mh.seed = rng.split(0x51).seed();
          estimate = estimate_by_mcmc(selector, EstimatorKind::PlugIn, mh);
        }
      }
      batch = sample_batch(estimate, problem->prior, config.batch_size, w, rng, history.design,
                           selector.emulator().output(0).kernel().lengthscales);
    }

    BatchOutcome outcome =
        simulate_batch(batch, *problem, sim_root.split(static_cast<std::uint64_t>(t)), ledger, config.threads);
    history.design = stack(history.design, outcome.points);
    history.responses = stack(history.responses, outcome.responses);
    auto [next, tv] = metric_fit(t);
    current = std::move(next);

    RoundRecord r;
    r.round = t;
    r.beta = beta;
    r.batch = outcome.points;
    r.responses = outcome.responses;
    r.acquisition.resize(static_cast<Index>(outcome.kept.size()));
    for (std::size_t k = 0; k < outcome.kept.size(); ++k) r.acquisition(static_cast<Index>(k)) = acq_values(outcome.kept[k]);
    r.dropped = outcome.dropped;
    r.tv_to_oracle = tv;
    r.cumulative_calls = ledger.total_calls();
    r.emulator = current.emulator();
    history.rounds.push_back(std::move(r));
    logger()->info("round {}: beta {:.3f}, {} points, tv {:.4f}, calls {}", t, beta, outcome.points.rows(), tv,
                   ledger.total_calls());
  }
  history.simulator_calls = ledger.total_calls();
  return history;
}

RefinementResult mh_with_refinement(const InverseProblem& problem, const GpEmulator& emulator, double threshold,
                                    Index budget, const MhConfig& config) {
  if (emulated_quantity(problem) != EmulatedQuantity::LogLikelihood)
    throw InputError("mh_with_refinement: requires a log-density emulator");
  if (budget < 0) throw InputError("mh_with_refinement: budget must be nonnegative");
  if (std::isnan(threshold)) throw InputError("mh_with_refinement: threshold is NaN");
  if (emulator.dim() != problem.dim()) throw InputError("mh_with_refinement: emulator dimension mismatch");

  RefinementResult out;
  GpEmulator gp = emulator;
  std::vector<VectorXd> added;
  Rng rng(config.seed);
  Rng sim_rng = rng.split(0x7e51);

  const LogDensity log_density = [&](const VectorXd& x) {
    const double lp = problem.prior.log_density(x);
    if (!std::isfinite(lp)) return kNegInf;
    return lp + gp.predict_marginal(MatrixXd(x.transpose())).mean(0);
  };
  const ProposalHook hook = [&](const VectorXd& x) {
    if (out.refinements >= budget || !problem.prior.contains(x)) return false;
    if (!(gp.predict_marginal(MatrixXd(x.transpose())).variance(0) > threshold)) return false;
    ++out.refinements;
    const SimObservation obs = simulate(x, problem, sim_rng);
    if (obs.degenerate || !obs.value.allFinite()) return false;
    try {
      gp = gp.update(MatrixXd(x.transpose()), obs.value);
    } catch (const DegenerateUpdateError&) {
      return false;
    }
    added.push_back(x);
    return true;
  };
  out.chain = rwmh(log_density, problem.prior, config, rng, hook);
  out.emulator = MultiOutputGp({gp});
  out.refined_points.resize(static_cast<Index>(added.size()), problem.dim());
  for (std::size_t i = 0; i < added.size(); ++i) out.refined_points.row(static_cast<Index>(i)) = added[i].transpose();
  return out;
}

}  // namespace surro
