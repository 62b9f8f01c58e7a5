#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "surro/errors.hpp"
#include "surro/estimators.hpp"
#include "surro/hyperparameters.hpp"
#include "surro/linalg.hpp"

using namespace surro;

namespace {

Kernel se1(double ell, double sv) { return Kernel::squared_exponential(VectorXd::Constant(1, ell), sv); }

MatrixXd col(const std::vector<double>& v) {
  MatrixXd m(static_cast<Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Index>(i), 0) = v[i];
  return m;
}

VectorXd v1(double x) { return VectorXd::Constant(1, x); }

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mc_mean(const VectorXd& x) {
  const double n = static_cast<double>(x.size());
  const double m = x.mean();
  return {m, std::sqrt((x.array() - m).square().sum() / (n - 1.0) / n)};
}

// Sample variance with a delta-method standard error.
MeanSe mc_variance(const VectorXd& x) {
  const double m = x.mean();
  const VectorXd sq = (x.array() - m).square().matrix();
  return mc_mean(sq);
}

// Log-likelihood emulator of a built-in problem from design points.
GpEmulator loglik_gp(const InverseProblem& p, const MatrixXd& x, const Kernel& k) {
  VectorXd y(x.rows());
  for (Index i = 0; i < x.rows(); ++i) y(i) = p.log_likelihood(x.row(i).transpose());
  return fit_gp(x, y, k, MeanFunction::constant(y.mean()), 0.0);
}

std::shared_ptr<InverseProblem> forward_variant(const std::string& name) {
  auto p = std::make_shared<InverseProblem>(*builtin_problem(name));
  p->target = ForwardModelTarget{};
  return p;
}

GpEmulator forward_gp(const InverseProblem& p, const MatrixXd& x, const Kernel& k) {
  VectorXd y(x.rows());
  for (Index i = 0; i < x.rows(); ++i) y(i) = p.forward_model(x.row(i).transpose())(0);
  return fit_gp(x, y, k, MeanFunction::constant(y.mean()), 0.0);
}

SurrogatePosterior bimodal_ldens(const std::vector<double>& design, const Kernel& k) {
  auto p = builtin_problem("bimodal");
  return SurrogatePosterior(p, MultiOutputGp({loglik_gp(*p, col(design), k)}));
}

Grid line(double a, double b, Index n) { return Grid::uniform(v1(a), v1(b), n); }

}  // namespace

TEST_CASE("estimator names round trip") {
  for (auto k : {EstimatorKind::PlugIn, EstimatorKind::Eup, EstimatorKind::Ep, EstimatorKind::Quantile,
                 EstimatorKind::Mode, EstimatorKind::ExpectedLogLik, EstimatorKind::GridTruth})
    CHECK(parse_estimator(estimator_name(k)) == k);
  CHECK_THROWS_AS(parse_estimator("median"), InputError);
}

TEST_CASE("log-normal pushforward moments") {
  SUBCASE("degenerate") {
    const auto m = pushforward_moments_ldens(0.0, 0.0, 0.0);
    CHECK(m.mean == 1.0);
    CHECK(m.variance == 0.0);
  }
  SUBCASE("monte carlo") {
    const double lp = std::log(0.5), mu = -1.3, s2 = 0.7;
    const auto m = pushforward_moments_ldens(lp, mu, s2);
    Rng rng(17);
    VectorXd draws(1000000);
    for (Index i = 0; i < draws.size(); ++i) draws(i) = 0.5 * std::exp(mu + std::sqrt(s2) * rng.normal());
    const MeanSe mean = mc_mean(draws);
    const MeanSe var = mc_variance(draws);
    CHECK(std::abs(m.mean - mean.mean) <= 3.0 * mean.se);
    CHECK(std::abs(m.variance - var.mean) <= 3.0 * var.se);
    CHECK(std::abs(log_eup_ldens(lp, mu, s2) - std::log(mean.mean)) <= 3.0 * mean.se / mean.mean);
  }
  SUBCASE("prior scaling") {
    const auto a = pushforward_moments_ldens(std::log(0.3), 0.2, 0.4);
    const auto b = pushforward_moments_ldens(std::log(0.6), 0.2, 0.4);
    CHECK(b.mean == doctest::Approx(2.0 * a.mean).epsilon(1e-13));
    CHECK(b.variance == doctest::Approx(4.0 * a.variance).epsilon(1e-13));
  }
  SUBCASE("overflow is flagged") {
    const auto m = pushforward_moments_ldens(0.0, 400.0, 400.0);
    CHECK(m.overflow);
    CHECK(std::isinf(m.variance));
    CHECK(std::isfinite(m.log_variance));
  }
}

TEST_CASE("gaussian pushforward moments") {
  const VectorXd y = v1(1.0);
  const MatrixXd sigma = MatrixXd::Constant(1, 1, 0.25);
  const double lp = std::log(0.7);

  SUBCASE("zero variance") {
    const auto m = pushforward_moments_fwd(lp, v1(0.4), v1(0.0), y, sigma);
    CHECK(m.log_mean == doctest::Approx(lp + gaussian_loglik(y, v1(0.4), sigma)).epsilon(1e-15));
    CHECK(m.variance == 0.0);
  }
  SUBCASE("monte carlo") {
    const double mu = 0.4, s2 = 0.3;
    const auto m = pushforward_moments_fwd(lp, v1(mu), v1(s2), y, sigma);
    Rng rng(5);
    VectorXd draws(1000000);
    for (Index i = 0; i < draws.size(); ++i) {
      const double f = mu + std::sqrt(s2) * rng.normal();
      draws(i) = 0.7 * std::exp(-0.5 * (1.0 - f) * (1.0 - f) / 0.25) / std::sqrt(2.0 * M_PI * 0.25);
    }
    const MeanSe mean = mc_mean(draws);
    const MeanSe var = mc_variance(draws);
    CHECK(std::abs(m.mean - mean.mean) <= 3.0 * mean.se);
    CHECK(std::abs(m.variance - var.mean) <= 3.0 * var.se);
    CHECK(std::abs(log_eup_fwd(lp, v1(mu), v1(s2), y, sigma) - std::log(mean.mean)) <= 3.0 * mean.se / mean.mean);
    CHECK(std::abs(std::exp(log_eup_fwd(lp, v1(mu), v1(s2), y, sigma)) / m.mean - 1.0) <= 1e-12);
  }
  SUBCASE("two outputs") {
    const VectorXd y2 = (VectorXd(2) << 0.5, -0.2).finished();
    const MatrixXd s = (MatrixXd(2, 2) << 0.3, 0.1, 0.1, 0.2).finished();
    const VectorXd mu = (VectorXd(2) << 0.2, 0.1).finished();
    const VectorXd var = (VectorXd(2) << 0.15, 0.05).finished();
    const auto m = pushforward_moments_fwd(0.0, mu, var, y2, s);
    Rng rng(8);
    VectorXd draws(400000);
    for (Index i = 0; i < draws.size(); ++i) {
      const VectorXd f = mu + var.cwiseSqrt().cwiseProduct(rng.normal_vector(2));
      draws(i) = std::exp(gaussian_loglik(y2, f, s));
    }
    const MeanSe mean = mc_mean(draws);
    const MeanSe v = mc_variance(draws);
    CHECK(std::abs(m.mean - mean.mean) <= 3.0 * mean.se);
    CHECK(std::abs(m.variance - v.mean) <= 3.0 * v.se);
  }
  SUBCASE("huge variance reverts toward the prior") {
    const double sigma_only = std::exp(gaussian_loglik(y, v1(1.0), sigma));
    const auto m = pushforward_moments_fwd(lp, v1(1.0), v1(1e12 * 0.25), y, sigma);
    CHECK(m.mean / 0.7 <= 1e-5 * sigma_only);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(pushforward_moments_fwd(0.0, v1(0.0), VectorXd::Zero(2), y, sigma), InputError);
  }
}

TEST_CASE("log-density pointwise estimators") {
  const double lp = -0.7, mu = 0.3, s2 = 0.25;
  CHECK(log_eup_ldens(lp, mu, 0.0) == lp + mu);
  CHECK(log_mode_ldens(lp, mu, 0.0) == lp + mu);
  CHECK(log_eup_ldens(lp, mu, s2) - (lp + mu) == doctest::Approx(0.5 * s2).epsilon(1e-15));
  CHECK(log_quantile_ldens(lp, mu, s2, 0.5) == lp + mu);
  CHECK(std::abs(log_quantile_ldens(lp, mu, s2, 0.841345) - (lp + mu) - 0.5) <= 1e-6);
  CHECK_THROWS_AS(log_quantile_ldens(lp, mu, s2, 0.0), InputError);
  CHECK_THROWS_AS(log_quantile_ldens(lp, mu, s2, 1.0), InputError);

  SUBCASE("quantile oracle") {
    Rng rng(23);
    std::vector<double> draws(1000000);
    for (auto& d : draws) d = std::exp(mu + std::sqrt(s2) * rng.normal());
    for (double a : {0.1, 0.5, 0.9}) {
      const auto nth = draws.begin() + static_cast<std::ptrdiff_t>(a * static_cast<double>(draws.size()));
      std::nth_element(draws.begin(), nth, draws.end());
      const double expected = std::exp(log_quantile_ldens(lp, mu, s2, a)) / std::exp(lp);
      CHECK(std::abs(*nth / expected - 1.0) <= 0.01);
    }
  }
  SUBCASE("kernel density mode oracle") {
    const double m0 = 0.0, v0 = 0.1;
    Rng rng(29);
    const double lo = 0.0, hi = 4.0;
    const Index bins = 4000;
    VectorXd hist = VectorXd::Zero(bins);
    std::vector<double> draws(1000000);
    for (auto& d : draws) {
      d = std::exp(m0 + std::sqrt(v0) * rng.normal());
      const Index b = static_cast<Index>((d - lo) / (hi - lo) * bins);
      if (b >= 0 && b < bins) hist(b) += 1.0;
    }
    const double sd = std::sqrt(mc_variance(Eigen::Map<VectorXd>(draws.data(), 1000000)).mean);
    const double h = 1.06 * sd * std::pow(1e6, -0.2);
    const double width = (hi - lo) / bins;
    double best = -1.0, arg = 0.0;
    for (Index i = 0; i < bins; ++i) {
      const double x = lo + (i + 0.5) * width;
      double kde = 0.0;
      for (Index j = std::max<Index>(0, i - 400); j < std::min(bins, i + 400); ++j) {
        const double u = (x - (lo + (j + 0.5) * width)) / h;
        kde += hist(j) * std::exp(-0.5 * u * u);
      }
      if (kde > best) best = kde, arg = x;
    }
    CHECK(std::abs(arg / std::exp(log_mode_ldens(0.0, m0, v0)) - 1.0) <= 0.05);
  }
}

TEST_CASE("surrogate posterior binding") {
  auto p = builtin_problem("bimodal");
  const MatrixXd x = col({-1.5, -0.5, 0.5, 1.5});
  const GpEmulator gp = loglik_gp(*p, x, se1(0.6, 10.0));
  const SurrogatePosterior sp(p, MultiOutputGp({gp}));
  CHECK(sp.quantity() == EmulatedQuantity::LogLikelihood);
  CHECK_THROWS_AS(sp.log_density(EstimatorKind::Ep, x), InputError);
  CHECK_THROWS_AS(sp.log_density(EstimatorKind::Quantile, x, 1.5), InputError);
  CHECK(std::isinf(sp.log_density(EstimatorKind::PlugIn, v1(3.0))));

  auto fp = forward_variant("bimodal");
  const SurrogatePosterior fsp(fp, MultiOutputGp({forward_gp(*fp, x, se1(0.6, 1.0))}));
  CHECK(fsp.quantity() == EmulatedQuantity::ForwardModel);
  CHECK_THROWS_AS(fsp.log_density(EstimatorKind::Quantile, x), InputError);
  CHECK_THROWS_AS(fsp.log_density(EstimatorKind::Mode, x), InputError);

  const GpEmulator two_d = fit_gp(MatrixXd::Zero(1, 2), v1(0.0),
                                  Kernel::squared_exponential(VectorXd::Ones(2), 1.0), MeanFunction::zero(), 0.0);
  CHECK_THROWS_AS(SurrogatePosterior(p, MultiOutputGp({two_d})), InputError);
}

TEST_CASE("pointwise orderings on a grid") {
  const SurrogatePosterior sp = bimodal_ldens({-1.8, -1.0, 0.3, 1.1, 1.9}, se1(0.5, 30.0));
  const Grid g = line(-2.0, 2.0, 201);
  const VectorXd mode = sp.log_density(EstimatorKind::Mode, g.points());
  const VectorXd median = sp.log_density(EstimatorKind::Quantile, g.points(), 0.5);
  const VectorXd eup = sp.log_density(EstimatorKind::Eup, g.points());
  const VectorXd q1 = sp.log_density(EstimatorKind::Quantile, g.points(), 0.2);
  const VectorXd q2 = sp.log_density(EstimatorKind::Quantile, g.points(), 0.7);
  const VectorXd plug = sp.log_density(EstimatorKind::PlugIn, g.points());
  const VectorXd s2 = sp.predict(g.points()).variance.col(0);
  CHECK((median - plug).cwiseAbs().maxCoeff() == 0.0);
  CHECK((mode.array() <= median.array()).all());
  CHECK((median.array() <= eup.array()).all());
  CHECK((q1.array() <= q2.array()).all());
  CHECK(((eup - plug) - 0.5 * s2).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("estimators coincide at zero emulator variance") {
  const Grid g = line(-2.0, 2.0, 512);
  const SurrogatePosterior base = bimodal_ldens({-1.8, -1.0, -0.2, 0.6, 1.3, 1.9}, se1(0.5, 30.0));
  VarianceAdjustment zero;
  zero.scale = 0.0;
  const SurrogatePosterior sp = base.with_adjustment(zero);
  const VectorXd plug = estimate_plug_in(sp, g).density;
  CHECK(std::abs(g.integrate(plug) - 1.0) <= 1e-6);
  CHECK(tv_distance(plug, estimate_eup(sp, g).density, g) <= 1e-10);
  CHECK(tv_distance(plug, estimate_on_grid(sp, EstimatorKind::Mode, g).density, g) <= 1e-6);
  for (double a : {0.05, 0.5, 0.95})
    CHECK(tv_distance(plug, estimate_on_grid(sp, EstimatorKind::Quantile, g, a).density, g) <= 1e-6);
  Rng rng(1);
  CHECK(tv_distance(plug, ep_grid_mixture(sp, g, 16, rng).density, g) <= 1e-6);

  SUBCASE("ep samples") {
    // Chains start from exact draws and rarely switch modes, so chain means are the independent units.
    EpOptions opt;
    opt.trajectories = 64;
    opt.draws = 200;
    opt.grid = g;
    Rng r(2);
    const PosteriorEstimate ep = sample_ep(sp, opt, r);
    VectorXd chain_means(64);
    for (Index k = 0; k < 64; ++k) chain_means(k) = ep.samples.col(0).segment(k * 200, 200).mean();
    const MeanSe m = mc_mean(chain_means);
    CHECK(std::abs(m.mean - grid_moments(plug, g).mean(0)) <= 3.0 * m.se);
  }
  SUBCASE("forward-model emulator") {
    auto fp = forward_variant("bimodal");
    const MatrixXd x = col({-2.0, -1.0, 0.0, 1.0, 2.0});
    const SurrogatePosterior fsp(fp, MultiOutputGp({forward_gp(*fp, x, se1(0.8, 2.0))}), zero);
    const VectorXd fplug = estimate_plug_in(fsp, g).density;
    CHECK(tv_distance(fplug, estimate_eup(fsp, g).density, g) <= 1e-10);
    CHECK(tv_distance(fplug, estimate_on_grid(fsp, EstimatorKind::ExpectedLogLik, g).density, g) <= 1e-10);
    Rng r(3);
    CHECK(tv_distance(fplug, ep_grid_mixture(fsp, g, 8, r).density, g) <= 1e-6);
  }
}

TEST_CASE("plug-in estimate against the conjugate oracle") {
  auto p = builtin_problem("conjugate");
  std::vector<double> design;
  for (int i = 0; i <= 30; ++i) design.push_back(-5.0 + 10.0 * i / 30.0);
  const MatrixXd x = col(design);
  VectorXd y(x.rows());
  for (Index i = 0; i < x.rows(); ++i) y(i) = p->log_likelihood(x.row(i).transpose());
  const HyperparameterFit fit = optimize_hyperparameters(x, y, {});
  VarianceAdjustment zero;
  zero.scale = 0.0;
  const SurrogatePosterior sp(p, MultiOutputGp({fit_gp(x, y, fit)}), zero);
  const Grid g = line(-5.0, 5.0, 1024);
  const PosteriorEstimate est = estimate_plug_in(sp, g);
  CHECK(tv_distance(est.density, grid_posterior_oracle(*p, g), g) <= 0.01);

  SUBCASE("grid and mcmc moments agree") {
    MhConfig cfg;
    cfg.steps = 40000;
    cfg.seed = 4;
    const PosteriorEstimate mc = estimate_by_mcmc(sp, EstimatorKind::PlugIn, cfg);
    const Moments a = est.moments();
    const Moments b = mc.moments();
    const double ess = effective_sample_size(mc.samples.col(0));
    CHECK(std::abs(a.mean(0) - b.mean(0)) <= 3.0 * std::sqrt(a.variance(0) / ess));
    CHECK(std::abs(a.variance(0) - b.variance(0)) <= 3.0 * a.variance(0) * std::sqrt(2.0 / ess));
  }
}

TEST_CASE("flat emulator mean gives the prior") {
  auto p = builtin_problem("conjugate");
  const GpEmulator gp = fit_gp(col({-1.0, 0.0, 1.0}), VectorXd::Zero(3), se1(1.0, 1.0), MeanFunction::zero(), 0.0);
  const SurrogatePosterior sp(p, MultiOutputGp({gp}));
  const Grid g = line(-5.0, 5.0, 257);
  const VectorXd prior = normalize_on_grid(p->prior.log_density_rows(g.points()), g);
  CHECK(tv_distance(estimate_plug_in(sp, g).density, prior, g) <= 1e-12);
}

TEST_CASE("degenerate grid estimate") {
  auto p = builtin_problem("bimodal");
  const GpEmulator gp = fit_gp(col({0.0}), v1(0.0), se1(1.0, 1.0), MeanFunction::zero(), 0.0);
  const SurrogatePosterior sp(p, MultiOutputGp({gp}));
  CHECK_THROWS_AS(estimate_plug_in(sp, line(3.0, 4.0, 16)), DegenerateEstimateError);
}

TEST_CASE("forward-model EUP reverts to the prior") {
  auto fp = forward_variant("bimodal");
  const MatrixXd x = col({-1.5, 0.0, 1.5});
  VarianceAdjustment huge;
  huge.fixed = 1e6 * 0.09;
  const SurrogatePosterior sp(fp, MultiOutputGp({forward_gp(*fp, x, se1(0.8, 2.0))}), huge);
  const Grid g = line(-2.0, 2.0, 512);
  const VectorXd prior = normalize_on_grid(fp->prior.log_density_rows(g.points()), g);
  CHECK(tv_distance(estimate_eup(sp, g).density, prior, g) <= 0.02);
  CHECK(tv_distance(estimate_plug_in(sp, g).density, prior, g) > 0.2);
}

TEST_CASE("EUP collapses into an uncertain hole while EP keeps both modes") {
  const SurrogatePosterior sp =
      bimodal_ldens({-2.0, -1.6, -1.2, -1.0, -0.8, -0.4, 0.8, 1.0, 1.2, 1.6, 2.0}, se1(0.35, 100.0));
  const Grid g = line(-2.0, 2.0, 401);
  const PointwisePrediction pred = sp.predict(g.points());
  Index hole = 0;
  (pred.mean.col(0) + 0.5 * pred.variance.col(0)).maxCoeff(&hole);
  Index eup_mode = 0;
  estimate_eup(sp, g).density.maxCoeff(&eup_mode);
  CHECK(eup_mode == hole);
  CHECK(std::abs(g.points()(hole, 0) - 0.2) < 0.4);
  Rng rng(7);
  const VectorXd ep = ep_grid_mixture(sp, g, 256, rng).density;
  CHECK(count_peaks(ep, 0.1) >= 2);
  const double at_minus = ep(g.nearest_node(v1(-1.0)));
  const double at_plus = ep(g.nearest_node(v1(1.0)));
  CHECK(at_minus >= 0.1 * ep.maxCoeff());
  CHECK(at_plus >= 0.1 * ep.maxCoeff());
}

TEST_CASE("EP sampling matches the grid mixture") {
  const SurrogatePosterior sp = bimodal_ldens({-1.9, -1.2, -0.5, 0.4, 1.1, 1.8}, se1(0.45, 25.0));
  const Grid g = line(-2.0, 2.0, 256);
  EpOptions opt;
  opt.trajectories = 512;
  opt.draws = 200;
  opt.grid = g;
  Rng a(11);
  const PosteriorEstimate ep = sample_ep(sp, opt, a);
  CHECK(ep.samples.rows() == 512 * 200);
  Rng b(11);
  const PosteriorEstimate mix = ep_grid_mixture(sp, g, 512, b);
  const double tv = tv_to_grid_density(ep, mix.density, g);
  MESSAGE("EP vs grid mixture TV " << tv);
  CHECK(tv <= 0.05);

  SUBCASE("single trajectory") {
    EpOptions one = opt;
    one.trajectories = 1;
    Rng r(3);
    const PosteriorEstimate e1 = sample_ep(sp, one, r);
    CHECK(e1.samples.rows() == 200);
    CHECK(std::all_of(e1.trajectory.begin(), e1.trajectory.end(), [](Index t) { return t == 0; }));
  }
  SUBCASE("reproducible") {
    EpOptions small = opt;
    small.trajectories = 8;
    Rng r1(5), r2(5);
    CHECK(sample_ep(sp, small, r1).samples == sample_ep(sp, small, r2).samples);
  }
}

TEST_CASE("feature-mode EP on a two-dimensional problem") {
  auto p = builtin_problem("ode");
  Rng rng(9);
  const MatrixXd x = p->prior.sample(25, rng);
  VectorXd y(x.rows());
  for (Index i = 0; i < x.rows(); ++i) y(i) = p->log_likelihood(x.row(i).transpose());
  const HyperparameterFit fit = optimize_hyperparameters(x, y, {});
  const SurrogatePosterior sp(p, MultiOutputGp({fit_gp(x, y, fit)}));
  EpOptions opt;
  opt.mode = TrajectoryOptions::Mode::Feature;
  opt.trajectories = 4;
  opt.draws = 100;
  opt.features = 512;
  const PosteriorEstimate ep = sample_ep(sp, opt, rng);
  CHECK(ep.samples.rows() == 400);
  for (Index i = 0; i < ep.samples.rows(); ++i) CHECK(p->prior.contains(ep.samples.row(i).transpose()));
}
