#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "surro/active_learning.hpp"
#include "surro/errors.hpp"

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

SurrogatePosterior ldens_surrogate(const std::string& name, const std::vector<double>& design, const Kernel& k,
                                   double noise = 0.0) {
  auto p = builtin_problem(name);
  const MatrixXd x = col(design);
  VectorXd y(x.rows());
  for (Index i = 0; i < x.rows(); ++i) y(i) = p->log_likelihood(x.row(i).transpose());
  return SurrogatePosterior(p, MultiOutputGp({fit_gp(x, y, k, MeanFunction::constant(y.mean()), noise)}));
}

SurrogatePosterior fwd_surrogate(const std::vector<double>& design, const Kernel& k, double noise = 0.0) {
  auto p = std::make_shared<InverseProblem>(*builtin_problem("bimodal"));
  p->target = ForwardModelTarget{};
  const MatrixXd x = col(design);
  VectorXd y(x.rows());
  for (Index i = 0; i < x.rows(); ++i) y(i) = p->forward_model(x.row(i).transpose())(0);
  return SurrogatePosterior(p, MultiOutputGp({fit_gp(x, y, k, MeanFunction::constant(y.mean()), noise)}));
}

double lognormal_variance(double lp, double m, double s2) {
  return std::exp(2.0 * lp + 2.0 * m + s2) * std::expm1(s2);
}

// Kolmogorov-Smirnov distance of 1-D draws to a CDF.
template <class Cdf>
double ks_distance(VectorXd x, Cdf cdf) {
  std::sort(x.data(), x.data() + x.size());
  const double n = static_cast<double>(x.size());
  double worst = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double f = cdf(x(i));
    worst = std::max({worst, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  return worst;
}

double normal_cdf(double x, double m, double s) { return 0.5 * std::erfc(-(x - m) / (s * std::sqrt(2.0))); }

}  // namespace

TEST_CASE("acquisition and strategy names round trip") {
  for (auto k : {AcquisitionKind::MaxVarLdens, AcquisitionKind::EcuVarLdens, AcquisitionKind::EcuVarFwd,
                 AcquisitionKind::WeightedIvar, AcquisitionKind::PosteriorSample, AcquisitionKind::Random})
    CHECK(parse_acquisition(acquisition_name(k)) == k);
  for (auto s : {BatchStrategy::Exhaustive, BatchStrategy::KrigingBeliever, BatchStrategy::ConstantLiar,
                 BatchStrategy::DirectSampling})
    CHECK(parse_strategy(strategy_name(s)) == s);
  CHECK_THROWS_AS(parse_acquisition("ucb"), InputError);
  Acquisition bad;
  bad.mix_weight = 1.5;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("max-variance criterion") {
  SUBCASE("zero variance at a design point") {
    const SurrogatePosterior sp = ldens_surrogate("bimodal", {-1.0, 0.0, 1.0}, se1(0.5, 10.0));
    CHECK(std::abs(acq_maxvar_ldens(sp, v1(0.0)).value) <= 1e-12);
  }
  SUBCASE("flat mean and constant variance prefer the prior mode") {
    auto p = builtin_problem("conjugate");
    const GpEmulator gp = fit_gp(col({-1.0, 1.0}), VectorXd::Zero(2), se1(1.0, 1.0), MeanFunction::zero(), 0.0);
    VarianceAdjustment fixed;
    fixed.fixed = 0.5;
    const SurrogatePosterior sp(p, MultiOutputGp({gp}), fixed);
    const Grid g = Grid::uniform(v1(-3.0), v1(3.0), 121);
    Index best = 0;
    double best_value = 0.0;
    for (Index i = 0; i < g.size(); ++i) {
      const double v = acq_maxvar_ldens(sp, g.points().row(i).transpose()).value;
      if (i == 0 || v < best_value) best = i, best_value = v;
    }
    CHECK(std::abs(g.points()(best, 0)) < 1e-12);
  }
  SUBCASE("argmin is the argmax of the pushforward variance") {
    const SurrogatePosterior sp = ldens_surrogate("bimodal", {-1.7, -0.6, 0.4, 1.5}, se1(0.4, 20.0));
    const Grid g = Grid::uniform(v1(-2.0), v1(2.0), 201);
    Index a = 0, b = 0;
    double va = 0.0, vb = 0.0;
    for (Index i = 0; i < g.size(); ++i) {
      const VectorXd th = g.points().row(i).transpose();
      const double acq = acq_maxvar_ldens(sp, th).value;
      const double var = pushforward_moments(sp, th).variance;
      if (i == 0 || acq < va) a = i, va = acq;
      if (i == 0 || var > vb) b = i, vb = var;
    }
    CHECK(a == b);
  }
  SUBCASE("rejects forward-model emulators") {
    const SurrogatePosterior sp = fwd_surrogate({-1.0, 0.0, 1.0}, se1(0.5, 1.0));
    CHECK_THROWS_AS(acq_maxvar_ldens(sp, v1(0.0)), InputError);
  }
}

TEST_CASE("log-density expected conditional variance") {
  const SurrogatePosterior sp = ldens_surrogate("bimodal", {-1.8, -0.9, 0.2, 1.3}, se1(0.6, 4.0));
  const Grid g = Grid::uniform(v1(-2.0), v1(2.0), 64);
  const RhoMeasure rho = RhoMeasure::grid(g);
  const double current = integrated_variance(sp, rho);

  SUBCASE("empty and duplicate batches change nothing") {
    CHECK(acq_ecu_var_ldens(sp, MatrixXd(0, 1), rho).value == doctest::Approx(current).epsilon(1e-12));
    CHECK(std::abs(acq_ecu_var_ldens(sp, col({0.2}), rho).value / current - 1.0) <= 1e-8);
  }
  SUBCASE("nested monte carlo oracle") {
    // Outer: responses drawn from the predictive observation law at the batch point.
    // Inner: exact log-normal variance under the literally updated GP.
    const GpEmulator& gp = sp.emulator().output(0);
    const MatrixXd batch = col({-0.35});
    const auto pb = gp.predict_marginal(batch);
    const VectorXd lp = sp.problem().prior.log_density_rows(rho.points);
    Rng rng(41);
    VectorXd draws(20000);
    for (Index s = 0; s < draws.size(); ++s) {
      const double y = pb.mean(0) + std::sqrt(pb.variance(0)) * rng.normal();
      const GpEmulator up = gp.update(batch, v1(y));
      const auto pr = up.predict_marginal(rho.points);
      double total = 0.0;
      for (Index j = 0; j < rho.points.rows(); ++j)
        total += rho.weights(j) * lognormal_variance(lp(j), pr.mean(j), pr.variance(j));
      draws(s) = total;
    }
    const MeanSe mc = mc_mean(draws);
    const double closed = acq_ecu_var_ldens(sp, batch, rho).value;
    CHECK(std::abs(closed - mc.mean) <= 3.0 * mc.se);
  }
  SUBCASE("never exceeds the current integrated variance") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      const Index b = 1 + static_cast<Index>(rng.uniform() * 3.0);
      MatrixXd batch(b, 1);
      for (Index i = 0; i < b; ++i) batch(i, 0) = rng.uniform(-2.0, 2.0);
      const double v = acq_ecu_var_ldens(sp, batch, rho).value;
      CHECK(v >= 0.0);
      CHECK(v <= current + 1e-10);
    }
  }
  SUBCASE("corrupting the reduction factor breaks the oracle") {
    const GpEmulator& gp = sp.emulator().output(0);
    const WhitenedPoints q = gp.whiten(rho.points);
    const VectorXd after = gp.conditional_variance(gp.whiten(col({-0.35})), q);
    const VectorXd lp = sp.problem().prior.log_density_rows(rho.points);
    double exact = 0.0, corrupted = 0.0;
    for (Index j = 0; j < lp.size(); ++j) {
      exact += rho.weights(j) * std::exp(log_ecu_ldens_node(lp(j), q.mean(j), q.variance(j), after(j)));
      corrupted += rho.weights(j) * std::exp(log_ecu_ldens_node(lp(j), q.mean(j), q.variance(j), after(j), 0.0));
    }
    CHECK(exact == doctest::Approx(acq_ecu_var_ldens(sp, col({-0.35}), rho).value).epsilon(1e-12));
    CHECK(corrupted < 0.9 * exact);
  }
}

TEST_CASE("forward-model expected conditional variance") {
  const SurrogatePosterior sp = fwd_surrogate({-1.8, -0.7, 0.5, 1.6}, se1(0.7, 2.0));
  const Grid g = Grid::uniform(v1(-2.0), v1(2.0), 64);
  const RhoMeasure rho = RhoMeasure::grid(g);
  const double current = integrated_variance(sp, rho);

  SUBCASE("duplicate batch equals the current integrated variance") {
    CHECK(std::abs(acq_ecu_var_fwd(sp, col({0.5}), rho).value / current - 1.0) <= 1e-8);
  }
  SUBCASE("nested monte carlo oracle") {
    const GpEmulator& gp = sp.emulator().output(0);
    const MatrixXd batch = col({1.05});
    const auto pb = gp.predict_marginal(batch);
    const InverseProblem& p = sp.problem();
    const VectorXd lp = p.prior.log_density_rows(rho.points);
    Rng rng(43);
    VectorXd draws(20000);
    for (Index s = 0; s < draws.size(); ++s) {
      const double y = pb.mean(0) + std::sqrt(pb.variance(0)) * rng.normal();
      const GpEmulator up = gp.update(batch, v1(y));
      const auto pr = up.predict_marginal(rho.points);
      double total = 0.0;
      for (Index j = 0; j < rho.points.rows(); ++j)
        total += rho.weights(j) * pushforward_moments_fwd(lp(j), v1(pr.mean(j)), v1(pr.variance(j)), p.observation,
                                                          p.noise_cov)
                                      .variance;
      draws(s) = total;
    }
    const MeanSe mc = mc_mean(draws);
    CHECK(std::abs(acq_ecu_var_fwd(sp, batch, rho).value - mc.mean) <= 3.0 * mc.se);
  }
  SUBCASE("noisy emulator") {
    const SurrogatePosterior noisy = fwd_surrogate({-1.8, -0.7, 0.5, 1.6}, se1(0.7, 2.0), 0.05);
    const GpEmulator& gp = noisy.emulator().output(0);
    const MatrixXd batch = col({0.0});
    const auto pb = gp.predict(batch, true);
    const InverseProblem& p = noisy.problem();
    const VectorXd lp = p.prior.log_density_rows(rho.points);
    Rng rng(44);
    VectorXd draws(20000);
    for (Index s = 0; s < draws.size(); ++s) {
      const double y = pb.mean(0) + std::sqrt(pb.cov(0, 0)) * rng.normal();
      const auto pr = gp.update(batch, v1(y)).predict_marginal(rho.points);
      double total = 0.0;
      for (Index j = 0; j < rho.points.rows(); ++j)
        total += rho.weights(j) *
                 pushforward_moments_fwd(lp(j), v1(pr.mean(j)), v1(pr.variance(j)), p.observation, p.noise_cov).variance;
      draws(s) = total;
    }
    const MeanSe mc = mc_mean(draws);
    CHECK(std::abs(acq_ecu_var_fwd(noisy, batch, rho).value - mc.mean) <= 3.0 * mc.se);
  }
  SUBCASE("nothing to learn without emulator variance") {
    const SurrogatePosterior flat = fwd_surrogate({-1.8, -0.7, 0.5, 1.6}, se1(0.7, 1e-40));
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial)
      CHECK(acq_ecu_var_fwd(flat, col({rng.uniform(-2.0, 2.0)}), rho).value <= 1e-30);
  }
  SUBCASE("bounded by the current integrated variance") {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
      MatrixXd batch(2, 1);
      batch << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
      const double v = acq_ecu_var_fwd(sp, batch, rho).value;
      CHECK(v >= 0.0);
      CHECK(v <= current + 1e-10);
    }
  }
}

TEST_CASE("weighted integrated variance") {
  const SurrogatePosterior sp = ldens_surrogate("bimodal", {-1.8, -0.9, 0.2, 1.3}, se1(0.6, 4.0));
  Rng rng(8);
  RhoMeasure uniform = RhoMeasure::prior_samples(sp.problem().prior, 32, rng);

  SUBCASE("uniform weights give the plain one-step-ahead variance") {
    const MatrixXd batch = col({0.7});
    const VectorXd after = sp.emulator().output(0).conditional_variance(batch, uniform.points);
    CHECK(acq_weighted_ivar(sp, batch, uniform).value == doctest::Approx(after.mean()).epsilon(1e-12));
  }
  SUBCASE("conditioning on the heaviest node removes its contribution") {
    const RhoMeasure rho = RhoMeasure::eup_weighted(sp, 32, rng);
    CHECK(rho.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    Index k = 0;
    rho.weights.maxCoeff(&k);
    const MatrixXd batch = rho.points.row(k);
    const VectorXd after = sp.emulator().output(0).conditional_variance(batch, rho.points);
    CHECK(after(k) <= 1e-8);  // jitter floor
    double others = 0.0;
    for (Index j = 0; j < after.size(); ++j)
      if (j != k) others += rho.weights(j) * after(j);
    CHECK(acq_weighted_ivar(sp, batch, rho).value - others <= 1e-8);
  }
  SUBCASE("single-point argmin matches an exhaustive sweep by refitting") {
    const RhoMeasure rho = RhoMeasure::eup_weighted(sp, 32, rng);
    const Grid g = Grid::uniform(v1(-2.0), v1(2.0), 81);
    const GpEmulator& gp = sp.emulator().output(0);
    Index sweep = -1;
    double best = 0.0;
    for (Index i = 0; i < g.size(); ++i) {
      const MatrixXd c = g.points().row(i);
      if ((gp.inputs().array() == c(0, 0)).any()) continue;
      const VectorXd var = gp.update(c, v1(0.0)).predict_marginal(rho.points).variance;
      const double v = rho.weights.dot(var);
      if (sweep < 0 || v < best) sweep = i, best = v;
    }
    Acquisition acq;
    acq.kind = AcquisitionKind::WeightedIvar;
    BatchOptions opt;
    opt.strategy = BatchStrategy::Exhaustive;
    const BatchSelection sel = optimize_batch(acq, sp, 1, opt, g.points(), rho);
    CHECK(sel.points(0, 0) == g.points()(sweep, 0));
    CHECK(sel.values(0) == doctest::Approx(best).epsilon(1e-8));
  }
}

TEST_CASE("batch optimisation") {
  const SurrogatePosterior sp = ldens_surrogate("bimodal", {-1.8, -0.9, 0.2, 1.3}, se1(0.6, 4.0));
  Rng rng(12);
  const RhoMeasure rho = RhoMeasure::prior_samples(sp.problem().prior, 64, rng);
  const MatrixXd cand = sp.problem().prior.sample(64, rng);
  Acquisition acq;

  SUBCASE("greedy with one point is the exhaustive argmin") {
    for (auto strategy : {BatchStrategy::Exhaustive, BatchStrategy::KrigingBeliever, BatchStrategy::ConstantLiar}) {
      BatchOptions opt;
      opt.strategy = strategy;
      const BatchSelection sel = optimize_batch(acq, sp, 1, opt, cand, rho);
      Index best = 0;
      double bv = 0.0;
      for (Index i = 0; i < cand.rows(); ++i) {
        const double v = acq_ecu_var_ldens(sp, MatrixXd(cand.row(i)), rho).value;
        if (i == 0 || v < bv) best = i, bv = v;
      }
      CHECK(sel.points.row(0) == cand.row(best));
    }
  }
  SUBCASE("kriging believer spreads max-variance batches") {
    acq.kind = AcquisitionKind::MaxVarLdens;
    BatchOptions opt;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng r(seed);
      const MatrixXd c = sp.problem().prior.sample(128, r);
      const BatchSelection sel = optimize_batch(acq, sp, 2, opt, c, rho);
      CHECK(std::abs(sel.points(0, 0) - sel.points(1, 0)) >= 0.01 * 0.6);
    }
  }
  SUBCASE("constant liar follows its own imputation") {
    const double lo = sp.emulator().output(0).responses().minCoeff();
    const double hi = sp.emulator().output(0).responses().maxCoeff();
    for (double c : {lo, hi}) {
      BatchOptions opt;
      opt.strategy = BatchStrategy::ConstantLiar;
      opt.liar = c;
      const BatchSelection sel = optimize_batch(acq, sp, 2, opt, cand, rho);
      const SurrogatePosterior first(sp.problem_ptr(), sp.emulator().update(sel.points.topRows(1), MatrixXd::Constant(1, 1, c)));
      Index best = -1;
      double bv = 0.0;
      for (Index i = 0; i < cand.rows(); ++i) {
        if (cand.row(i) == sel.points.row(0)) continue;
        const double v = acq_ecu_var_ldens(first, MatrixXd(cand.row(i)), rho).value;
        if (best < 0 || v < bv) best = i, bv = v;
      }
      CHECK(sel.points.row(1) == cand.row(best));
    }
  }
  SUBCASE("ties go to the lowest index") {
    acq.kind = AcquisitionKind::MaxVarLdens;
    MatrixXd c(6, 1);
    c << 1.3, 0.55, 0.55, 0.55, 0.55, 0.55;
    const BatchSelection sel = optimize_batch(acq, sp, 1, BatchOptions{}, c, rho);
    CHECK(sel.points(0, 0) == 0.55);
    CHECK(sel.values(0) == acq_maxvar_ldens(sp, v1(0.55)).value);
  }
  SUBCASE("contract errors") {
    BatchOptions opt;
    CHECK_THROWS_AS(optimize_batch(acq, sp, 100, opt, cand, rho), InputError);
    opt.strategy = BatchStrategy::DirectSampling;
    CHECK_THROWS_AS(optimize_batch(acq, sp, 1, opt, cand, rho), InputError);
    Acquisition random;
    random.kind = AcquisitionKind::Random;
    CHECK_THROWS_AS(optimize_batch(random, sp, 1, BatchOptions{}, cand, rho), InputError);
  }
}

TEST_CASE("sampling batches from the posterior estimate") {
  auto p = builtin_problem("conjugate");
  const Grid g = Grid::uniform(v1(-5.0), v1(5.0), 512);
  PosteriorEstimate post;
  post.grid = g;
  post.density = grid_posterior_oracle(*p, g);
  PosteriorEstimate prior_est;
  prior_est.grid = g;
  prior_est.density = normalize_on_grid(p->prior.log_density_rows(g.points()), g);
  auto prior_cdf = [&](double x) { return p->prior.cdf(0, x); };

  SUBCASE("w = 0 draws from the prior") {
    Rng rng(1);
    const MatrixXd x = sample_batch(post, p->prior, 1000, 0.0, rng);
    CHECK(ks_distance(x.col(0), prior_cdf) <= 0.05);
  }
  SUBCASE("w = 1 with the prior as estimate") {
    Rng rng(2);
    const MatrixXd x = sample_batch(prior_est, p->prior, 1000, 1.0, rng);
    CHECK(ks_distance(x.col(0), prior_cdf) <= 0.05);
  }
  SUBCASE("half mixture matches the analytic mixture cdf") {
    Rng rng(3);
    const MatrixXd x = sample_batch(post, p->prior, 10000, 0.5, rng);
    // Posterior of the conjugate problem: N(0.8, 0.2); truncation at +-5 is negligible.
    auto mix = [&](double t) { return 0.5 * normal_cdf(t, 0.8, std::sqrt(0.2)) + 0.5 * prior_cdf(t); };
    CHECK(ks_distance(x.col(0), mix) <= 0.03);
  }
  SUBCASE("sample sets and empty reservoirs") {
    PosteriorEstimate samples;
    samples.representation = PosteriorEstimate::Representation::Samples;
    Rng rng(4);
    CHECK_THROWS_AS(sample_batch(samples, p->prior, 2, 0.5, rng), InputError);
    samples.samples = col({0.25, 0.75});
    const MatrixXd x = sample_batch(samples, p->prior, 20, 1.0, rng);
    for (Index i = 0; i < x.rows(); ++i) CHECK((std::abs(x(i, 0) - 0.25) < 1e-3 || std::abs(x(i, 0) - 0.75) < 1e-3));
  }
  SUBCASE("duplicates of the design are nudged") {
    PosteriorEstimate samples;
    samples.representation = PosteriorEstimate::Representation::Samples;
    samples.samples = col({0.25});
    Rng rng(5);
    const MatrixXd x = sample_batch(samples, p->prior, 2, 1.0, rng, col({0.25}), v1(0.5));
    CHECK(x(0, 0) == doctest::Approx(0.25 + 5e-7).epsilon(1e-12));
    CHECK(x(1, 0) == doctest::Approx(0.25 + 1e-6).epsilon(1e-12));
  }
  SUBCASE("two-dimensional grid draws follow the interpolated density") {
    const Grid g2 = Grid::uniform(VectorXd::Zero(2), VectorXd::Ones(2), 33);
    VectorXd dens(g2.size());
    for (Index i = 0; i < g2.size(); ++i) dens(i) = 1.0 + 3.0 * g2.points()(i, 0) * g2.points()(i, 1);
    dens /= g2.integrate(dens);
    Rng rng(6);
    const MatrixXd x = sample_grid_density(dens, g2, 40000, rng);
    // E[x y] under (1 + 3xy) / (7/4) on the unit square is (1/4 + 1/3) / (7/4) = 1/3.
    const VectorXd prod = x.col(0).cwiseProduct(x.col(1));
    const MeanSe m = mc_mean(prod);
    CHECK(std::abs(m.mean - 1.0 / 3.0) <= 3.0 * m.se);
  }
}

TEST_CASE("tempering schedule and rescaling") {
  const auto beta = tempering_schedule(5);
  CHECK(beta.front() == 0.0);
  CHECK(beta.back() == 1.0);
  for (std::size_t i = 1; i < beta.size(); ++i) CHECK(beta[i] > beta[i - 1]);
  CHECK(beta[2] == doctest::Approx(0.16));
  const VectorXd y = (VectorXd(3) << -1.25, -7.0 / 3.0, 0.1).finished();
  CHECK(temper_responses(y, 1.0) == y);
  CHECK_THROWS_AS(temper_responses(y, 0.0), InputError);
}

TEST_CASE("active learning loop") {
  auto p = builtin_problem("conjugate");
  ActiveLearningConfig cfg;
  cfg.initial_design = 4;
  cfg.rounds = 3;
  cfg.batch_size = 2;
  cfg.seed = 21;

  SUBCASE("no rounds is the prior design") {
    ActiveLearningConfig zero = cfg;
    zero.rounds = 0;
    const DesignHistory h = run_active_learning(p, zero);
    REQUIRE(h.rounds.size() == 1);
    CHECK(h.design.rows() == 4);
    CHECK(std::isfinite(h.final_tv()));
  }
  SUBCASE("accounting and reproducibility") {
    const DesignHistory a = run_active_learning(p, cfg);
    const DesignHistory b = run_active_learning(p, cfg);
    REQUIRE(a.rounds.size() == 4);
    CHECK(a.simulator_calls == 4 + 3 * 2);
    CHECK(a.design.rows() == 10);
    for (std::size_t r = 1; r < a.rounds.size(); ++r) {
      CHECK(a.rounds[r].round == static_cast<Index>(r));
      CHECK(a.rounds[r].cumulative_calls >= a.rounds[r - 1].cumulative_calls);
    }
    CHECK(a.design == b.design);
    CHECK(a.responses == b.responses);
    for (std::size_t r = 0; r < a.rounds.size(); ++r) CHECK(a.rounds[r].tv_to_oracle == b.rounds[r].tv_to_oracle);
  }
  SUBCASE("noisy targets cost their replicates") {
    auto latent = builtin_problem("latent");
    ActiveLearningConfig noisy = cfg;
    noisy.rounds = 2;
    const DesignHistory h = run_active_learning(latent, noisy);
    CHECK(h.simulator_calls == replicates_per_observation(latent->target) * h.design.rows());
  }
  SUBCASE("sampling acquisitions") {
    for (auto kind : {AcquisitionKind::Random, AcquisitionKind::PosteriorSample}) {
      ActiveLearningConfig c = cfg;
      c.acquisition.kind = kind;
      const DesignHistory h = run_active_learning(p, c);
      CHECK(h.design.rows() == 10);
    }
  }
  SUBCASE("forward-model target with its own criterion") {
    auto fp = std::make_shared<InverseProblem>(*builtin_problem("bimodal"));
    fp->target = ForwardModelTarget{};
    ActiveLearningConfig c = cfg;
    c.acquisition.kind = AcquisitionKind::EcuVarFwd;
    const DesignHistory h = run_active_learning(fp, c);
    CHECK(h.design.rows() == 10);
    c.acquisition.kind = AcquisitionKind::EcuVarLdens;
    CHECK_THROWS_AS(run_active_learning(fp, c), ConfigError);
  }
  SUBCASE("tempered campaign ends on the untempered target") {
    ActiveLearningConfig t = cfg;
    t.tempering = true;
    const DesignHistory h = run_active_learning(p, t);
    CHECK(h.rounds.back().beta == 1.0);
    CHECK(h.rounds[1].beta == doctest::Approx(1.0 / 9.0));
    const Index before = h.design.rows() - h.rounds.back().batch.rows();
    const MatrixXd x = h.design.topRows(before);
    const MatrixXd y = h.responses.topRows(before);
    const SurrogatePosterior tempered = tempered_surrogate(p, x, y, tempering_schedule(3).back(), t.hyper);
    const SurrogatePosterior plain = tempered_surrogate(p, x, y, 1.0, t.hyper);
    CHECK(tempered.emulator().output(0).responses() == y.col(0));
    CHECK(tempered.emulator().output(0).alpha() == plain.emulator().output(0).alpha());
    const Grid g = Grid::uniform(v1(-5.0), v1(5.0), 101);
    CHECK(tempered.log_density(EstimatorKind::PlugIn, g.points()) == plain.log_density(EstimatorKind::PlugIn, g.points()));
    const SurrogatePosterior half = tempered_surrogate(p, x, y, 0.25, t.hyper);
    CHECK(half.emulator().output(0).responses() == 0.25 * y.col(0));
  }
}

TEST_CASE("MCMC with design refinement") {
  auto p = builtin_problem("conjugate");
  const MatrixXd x = col({-2.0, -0.5, 1.0, 2.5});
  VectorXd y(4);
  for (Index i = 0; i < 4; ++i) y(i) = p->log_likelihood(x.row(i).transpose());
  const GpEmulator gp = fit_gp(x, y, se1(1.0, 10.0), MeanFunction::constant(y.mean()), 0.0);
  MhConfig cfg;
  cfg.steps = 1500;
  cfg.seed = 3;

  SUBCASE("infinite threshold is plain plug-in sampling") {
    const RefinementResult r = mh_with_refinement(*p, gp, std::numeric_limits<double>::infinity(), 100, cfg);
    const Chain plain = rwmh(
        [&](const VectorXd& t) {
          const double lp = p->prior.log_density(t);
          return std::isfinite(lp) ? lp + gp.predict_marginal(MatrixXd(t.transpose())).mean(0) : lp;
        },
        p->prior, cfg);
    CHECK(r.refinements == 0);
    CHECK(r.chain.states == plain.states);
  }
  SUBCASE("budget caps refinements") {
    const RefinementResult r = mh_with_refinement(*p, gp, 0.0, 25, cfg);
    CHECK(r.refinements == 25);
    CHECK(r.emulator.size() == 4 + r.refined_points.rows());
  }
  SUBCASE("zero threshold samples the exact posterior") {
    const RefinementResult r = mh_with_refinement(*p, gp, 0.0, std::numeric_limits<Index>::max(), cfg);
    CHECK(r.refinements == cfg.steps);
    const MatrixXd kept = r.chain.retained();
    const double ess = effective_sample_size(kept.col(0));
    // Analytic posterior N(0.8, 0.2).
    CHECK(std::abs(kept.col(0).mean() - 0.8) <= 3.0 * std::sqrt(0.2 / ess));
  }
}
