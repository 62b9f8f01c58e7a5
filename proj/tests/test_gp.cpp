#include <doctest.h>

#include <cmath>

#include <Eigen/LU>

#include "surro/errors.hpp"
#include "surro/gp.hpp"
#include "surro/hyperparameters.hpp"
#include "surro/trajectory.hpp"

using namespace surro;

namespace {

Kernel se1(double ell, double sv = 1.0) { return Kernel::squared_exponential(VectorXd::Constant(1, ell), sv); }

MatrixXd col(std::initializer_list<double> v) {
  MatrixXd m(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

MatrixXd random_points(Rng& rng, Index n, Index d, double lo, double hi) {
  MatrixXd m(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Draw responses from a GP prior at x.
VectorXd prior_draw(const Kernel& k, const MatrixXd& x, Rng& rng) {
  return psd_factor(k.matrix(x, x)) * rng.normal_vector(x.rows());
}

}  // namespace

TEST_CASE("single point noiseless interpolation") {
  const GpEmulator gp = fit_gp(col({0.0}), VectorXd::Constant(1, 3.0), se1(1.0), MeanFunction::zero(), 0.0);
  const auto p = gp.predict(col({0.0}));
  CHECK(std::abs(p.mean(0) - 3.0) <= 1e-8);
  CHECK(p.cov(0, 0) <= 1e-8);
}

TEST_CASE("interpolation at every design point") {
  Rng rng(3);
  const MatrixXd x = random_points(rng, 12, 2, -1.0, 1.0);
  const VectorXd y = rng.normal_vector(12);
  Kernel k = Kernel::squared_exponential((VectorXd(2) << 0.4, 0.7).finished(), 2.0);
  const GpEmulator gp = fit_gp(x, y, k, MeanFunction::constant(0.3), 0.0);
  const auto p = gp.predict(x);
  CHECK((p.mean - y).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(p.cov.diagonal().maxCoeff() <= 1e-8);
}

TEST_CASE("predictive moments match a dense-inverse oracle") {
  Rng rng(11);
  const MatrixXd x = random_points(rng, 5, 1, 0.0, 2.0);
  const VectorXd y = rng.normal_vector(5);
  const MatrixXd q = random_points(rng, 3, 1, 0.0, 2.0);
  const Kernel k = se1(0.6, 1.5);
  const double noise = 0.01;
  const GpEmulator gp = fit_gp(x, y, k, MeanFunction::constant(0.2), noise);

  MatrixXd kxx = k.matrix(x, x);
  kxx.diagonal().array() += noise + gp.jitter();
  const MatrixXd kinv = kxx.inverse();
  const MatrixXd kqx = k.matrix(q, x);
  const VectorXd mean = VectorXd::Constant(3, 0.2) + kqx * kinv * (y.array() - 0.2).matrix();
  const MatrixXd cov = k.matrix(q, q) - kqx * kinv * kqx.transpose();

  const auto p = gp.predict(q);
  CHECK((p.mean - mean).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((p.cov - cov).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((p.cov - p.cov.transpose()).cwiseAbs().maxCoeff() == 0.0);

  const MatrixXd l = gp.cholesky();
  MatrixXd k_ref = k.matrix(x, x);
  k_ref.diagonal().array() += noise + gp.jitter();
  CHECK((l * l.transpose() - k_ref).cwiseAbs().maxCoeff() <= 1e-8 * k_ref.cwiseAbs().maxCoeff());
}

TEST_CASE("prediction far from data reverts to the prior") {
  const GpEmulator gp =
      fit_gp(col({0.0, 0.3, 0.5}), (VectorXd(3) << 1.0, -2.0, 0.5).finished(), se1(0.2, 2.5), MeanFunction::constant(0.7), 0.0);
  const auto p = gp.predict(col({40.0}));
  CHECK(std::abs(p.mean(0) - 0.7) <= 1e-6);
  CHECK(std::abs(p.cov(0, 0) - 2.5) <= 1e-6);
}

TEST_CASE("include_noise adds exactly the noise variance") {
  const double noise = 0.37;
  const GpEmulator gp = fit_gp(col({0.0, 1.0}), (VectorXd(2) << 1.0, 2.0).finished(), se1(0.5), MeanFunction::zero(), noise);
  const MatrixXd q = col({0.2, 0.6, 3.0});
  const auto a = gp.predict(q, false);
  const auto b = gp.predict(q, true);
  CHECK(b.includes_noise);
  CHECK(((b.cov.diagonal() - a.cov.diagonal()).array() - noise).abs().maxCoeff() <= 1e-15);
  CHECK((b.cov.diagonal().array() >= noise).all());
  MatrixXd off = b.cov - a.cov;
  off.diagonal().setZero();
  CHECK(off.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("joint and single-point predictions agree on the diagonal") {
  const GpEmulator gp = fit_gp(col({-1.0, 0.0, 1.2}), (VectorXd(3) << 0.1, 0.5, -0.4).finished(), se1(0.8), MeanFunction::zero(), 0.0);
  const auto joint = gp.predict(col({0.3, 0.9}));
  CHECK(std::abs(joint.cov(0, 0) - gp.predict(col({0.3})).cov(0, 0)) <= 1e-10);
  CHECK(std::abs(joint.cov(1, 1) - gp.predict(col({0.9})).cov(0, 0)) <= 1e-10);
  const auto marg = gp.predict_marginal(col({0.3, 0.9}));
  CHECK((marg.variance - joint.cov.diagonal()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("fit_gp input errors") {
  CHECK_THROWS_AS(fit_gp(col({0.0, 1.0}), VectorXd::Zero(3), se1(1.0), MeanFunction::zero(), 0.0), InputError);
  CHECK_THROWS_AS(fit_gp(col({0.0, 0.0}), VectorXd::Zero(2), se1(1.0), MeanFunction::zero(), 0.0),
                  DegenerateUpdateError);
  CHECK_THROWS_AS(fit_gp(MatrixXd::Zero(2, 2), VectorXd::Zero(2), se1(1.0), MeanFunction::zero(), 0.0), InputError);
  CHECK_THROWS_AS(Kernel::squared_exponential(VectorXd::Constant(1, -1.0), 1.0), InputError);
  // With noise, duplicates are fine.
  CHECK_NOTHROW(fit_gp(col({0.0, 0.0}), VectorXd::Zero(2), se1(1.0), MeanFunction::zero(), 0.1));
}

TEST_CASE("update with an empty batch is bitwise identical") {
  const GpEmulator gp = fit_gp(col({0.0, 1.0}), (VectorXd(2) << 1.0, 2.0).finished(), se1(0.5), MeanFunction::zero(), 0.0);
  const GpEmulator same = gp.update(MatrixXd(0, 1), VectorXd(0));
  const MatrixXd q = col({0.1, 0.4, 2.0});
  CHECK((gp.predict(q).mean.array() == same.predict(q).mean.array()).all());
  CHECK((gp.predict(q).cov.array() == same.predict(q).cov.array()).all());
}

TEST_CASE("update matches refit and is order invariant") {
  Rng rng(5);
  const Kernel k = Kernel::squared_exponential((VectorXd(2) << 0.5, 0.9).finished(), 1.3);
  const MatrixXd x = random_points(rng, 8, 2, 0.0, 1.0);
  const VectorXd y = rng.normal_vector(8);
  const MatrixXd xb = random_points(rng, 2, 2, 0.0, 1.0);
  const VectorXd yb = rng.normal_vector(2);
  const MatrixXd q = random_points(rng, 5, 2, 0.0, 1.0);
  const MeanFunction m = MeanFunction::affine(0.1, (VectorXd(2) << 0.5, -0.2).finished());

  for (double noise : {0.0, 0.05}) {
    const GpEmulator gp = fit_gp(x, y, k, m, noise);

    MatrixXd x1(9, 2);
    x1 << x, xb.row(0);
    VectorXd y1(9);
    y1 << y, yb(0);
    const auto one = gp.update(xb.topRows(1), yb.head(1)).predict(q);
    const auto ref1 = fit_gp(x1, y1, k, m, noise).predict(q);
    CHECK((one.mean - ref1.mean).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((one.cov - ref1.cov).cwiseAbs().maxCoeff() <= 1e-8);

    MatrixXd x2(10, 2);
    x2 << x, xb;
    VectorXd y2(10);
    y2 << y, yb;
    const auto both = gp.update(xb, yb).predict(q);
    const auto seq = gp.update(xb.topRows(1), yb.head(1)).update(xb.bottomRows(1), yb.tail(1)).predict(q);
    const auto ref2 = fit_gp(x2, y2, k, m, noise).predict(q);
    CHECK((both.mean - ref2.mean).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((both.cov - ref2.cov).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((seq.mean - both.mean).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((seq.cov - both.cov).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("update rejects noiseless duplicates") {
  const GpEmulator gp = fit_gp(col({0.0, 1.0}), (VectorXd(2) << 1.0, 2.0).finished(), se1(0.5), MeanFunction::zero(), 0.0);
  CHECK_THROWS_AS(gp.update(col({1.0}), VectorXd::Constant(1, 2.0)), DegenerateUpdateError);
  CHECK_THROWS_AS(gp.update(col({0.5, 0.5}), VectorXd::Zero(2)), DegenerateUpdateError);
}

TEST_CASE("conditional variance") {
  Rng rng(17);
  const MatrixXd x = random_points(rng, 6, 1, -2.0, 2.0);
  const VectorXd y = rng.normal_vector(6);
  const GpEmulator gp = fit_gp(x, y, se1(0.7, 1.2), MeanFunction::zero(), 0.0);
  const MatrixXd q = random_points(rng, 40, 1, -3.0, 3.0);
  const VectorXd s2 = gp.predict_marginal(q).variance;

  SUBCASE("existing design point adds nothing") {
    const VectorXd after = gp.conditional_variance(x.topRows(1), q);
    CHECK((after - s2).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SUBCASE("query inside the batch") {
    const MatrixXd batch = col({0.123, 2.5});
    const VectorXd after = gp.conditional_variance(batch, batch);
    CHECK(after.maxCoeff() <= 1e-8);
  }
  SUBCASE("matches update with dummy responses, which do not matter") {
    const MatrixXd batch = col({-0.4, 1.7});
    const VectorXd after = gp.conditional_variance(batch, q);
    const VectorXd via_a = gp.update(batch, (VectorXd(2) << 0.0, 0.0).finished()).predict_marginal(q).variance;
    const VectorXd via_b = gp.update(batch, (VectorXd(2) << 5.0, -9.0).finished()).predict_marginal(q).variance;
    CHECK((after - via_a).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((via_a - via_b).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("never increases the variance") {
    for (int r = 0; r < 50; ++r) {
      const MatrixXd batch = random_points(rng, 1 + r % 3, 1, -3.0, 3.0);
      const VectorXd after = gp.conditional_variance(batch, q);
      CHECK(((after - s2).array() <= 1e-10).all());
    }
  }
}

TEST_CASE("law of the updated mean") {
  Rng rng(23);
  const MatrixXd x = col({-1.0, -0.2, 0.8});
  const VectorXd y = (VectorXd(3) << 0.4, -0.3, 1.1).finished();
  const double noise = 0.04;
  const GpEmulator gp = fit_gp(x, y, se1(0.5), MeanFunction::constant(0.1), noise);
  const VectorXd theta = VectorXd::Constant(1, 0.3);

  SUBCASE("distant batch is uninformative") {
    const auto law = gp.updated_mean_law(col({50.0}), theta);
    CHECK(law.variance <= 1e-6);
  }
  SUBCASE("batch at the query reveals everything when noiseless") {
    const GpEmulator g0 = fit_gp(x, y, se1(0.5), MeanFunction::constant(0.1), 0.0);
    const auto law = g0.updated_mean_law(theta.transpose(), theta);
    CHECK(std::abs(law.variance - g0.predict_marginal(theta.transpose()).variance(0)) <= 1e-8);
  }
  SUBCASE("Monte Carlo resampling of batch responses") {
    const MatrixXd batch = col({0.1, 0.6});
    const auto law = gp.updated_mean_law(batch, theta);
    const auto eta = gp.predict(batch, true);
    const MatrixXd f = psd_factor(eta.cov);
    const int n = 100000;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const VectorXd yb = eta.mean + f * rng.normal_vector(2);
      const double m = gp.update(batch, yb).predict_marginal(theta.transpose()).mean(0);
      s += m;
      ss += m * m;
    }
    const double mean = s / n;
    const double var = ss / n - mean * mean;
    const double se_mean = std::sqrt(law.variance / n);
    const double se_var = law.variance * std::sqrt(2.0 / (n - 1));
    CHECK(std::abs(mean - law.mean) <= 3.0 * se_mean);
    CHECK(std::abs(var - law.variance) <= 3.0 * se_var);
  }
}

TEST_CASE("marginal sampling") {
  Rng rng(29);
  const GpEmulator gp = fit_gp(col({0.0, 1.0}), (VectorXd(2) << 1.0, -1.0).finished(), se1(0.6), MeanFunction::zero(), 0.0);
  SUBCASE("CLT bound") {
    const MatrixXd p = col({0.45});
    const auto pred = gp.predict_marginal(p);
    const int n = 100000;
    const MatrixXd d = gp.sample_marginal(p, n, rng);
    CHECK(std::abs(d.mean() - pred.mean(0)) <= 4.0 * std::sqrt(pred.variance(0) / n));
  }
  SUBCASE("zero-variance point") {
    const MatrixXd d = gp.sample_marginal(col({1.0}), 100, rng);
    CHECK((d.array() - (-1.0)).abs().maxCoeff() <= 1e-4);
  }
  SUBCASE("deterministic under a fixed seed") {
    Rng a(7), b(7);
    const MatrixXd p = col({0.2, 0.5, 2.0});
    CHECK((gp.sample_marginal(p, 20, a).array() == gp.sample_marginal(p, 20, b).array()).all());
  }
}

TEST_CASE("grid trajectories") {
  Rng rng(31);
  const MatrixXd x = col({-1.0, 0.0, 0.7, 1.5});
  const VectorXd y = (VectorXd(4) << 0.2, 1.0, -0.5, 0.3).finished();
  const GpEmulator gp = fit_gp(x, y, se1(0.5), MeanFunction::zero(), 0.0);
  TrajectoryOptions opt;
  opt.mode = TrajectoryOptions::Mode::Grid;
  opt.grid_points = x;
  for (int r = 0; r < 20; ++r) {
    const auto t = sample_trajectory(gp, opt, rng);
    CHECK((t.grid_values() - y).cwiseAbs().maxCoeff() <= 1e-4);
  }
  const auto t = sample_trajectory(gp, opt, rng);
  CHECK(t(x.row(2).transpose()) == t(x.row(2).transpose()));
  CHECK_THROWS_AS(t(VectorXd::Constant(1, 0.33)), InputError);
  opt.grid_points.resize(0, 1);
  CHECK_THROWS_AS(sample_trajectory(gp, opt, rng), InputError);
}

TEST_CASE("feature trajectories match the predictive marginals") {
  Rng rng(37);
  const MatrixXd x = col({-1.0, -0.3, 0.4, 1.1});
  const VectorXd y = (VectorXd(4) << 0.5, -0.8, 0.2, 1.0).finished();
  const GpEmulator gp = fit_gp(x, y, se1(0.6, 1.5), MeanFunction::constant(0.2), 0.01);
  const MatrixXd q = col({-1.5, -0.6, 0.0, 0.8, 1.8});
  const auto pred = gp.predict_marginal(q);
  TrajectoryOptions opt;
  opt.features = 2048;
  const int n = 10000;
  MatrixXd vals(n, q.rows());
  for (int i = 0; i < n; ++i) {
    Rng r = rng.split(static_cast<std::uint64_t>(i));
    vals.row(i) = sample_trajectory(gp, opt, r).evaluate(q).transpose();
  }
  const VectorXd mean = vals.colwise().mean().transpose();
  const VectorXd var = (vals.rowwise() - mean.transpose()).colwise().squaredNorm().transpose() / (n - 1);
  for (Index j = 0; j < q.rows(); ++j) {
    // Relative on the variance; the mean is compared on the predictive sd scale.
    CHECK(std::abs(var(j) - pred.variance(j)) <= 0.05 * pred.variance(j));
    CHECK(std::abs(mean(j) - pred.mean(j)) <= 0.05 * std::sqrt(pred.variance(j)));
  }
  Rng r(1);
  const auto t = sample_trajectory(gp, opt, r);
  const VectorXd th = VectorXd::Constant(1, 0.25);
  CHECK(t(th) == t(th));
  CHECK(std::abs(t(th) - t.evaluate(th.transpose())(0)) <= 1e-12);
}

TEST_CASE("hyperparameter recovery on synthetic GP data") {
  int hits = 0;
  const double truth = 0.2;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + static_cast<std::uint64_t>(seed));
    const MatrixXd x = random_points(rng, 40, 1, 0.0, 1.0);
    const VectorXd y = prior_draw(se1(truth, 1.0), x, rng);
    HyperparameterOptions opt;
    opt.mean_family = MeanFunction::Family::Zero;
    const auto fit = optimize_hyperparameters(x, y, opt);
    const double ell = fit.kernel.lengthscales(0);
    if (ell >= truth / 2.0 && ell <= truth * 2.0) ++hits;
    for (double s : fit.start_log_marginal_likelihoods)
      if (std::isfinite(s)) CHECK(fit.log_marginal_likelihood >= s);
  }
  CHECK(hits >= 16);
}

TEST_CASE("constant responses") {
  const MatrixXd x = col({0.0, 0.25, 0.5, 0.75, 1.0});
  const VectorXd y = VectorXd::Constant(5, 4.0);
  const auto fit = optimize_hyperparameters(x, y);
  CHECK((fit.kernel.signal_variance < 1e-4 * 4.0 || fit.noise_variance >= fit.kernel.signal_variance));
}

TEST_CASE("scale equivariance of the fitted hyperparameters") {
  Rng rng(41);
  const MatrixXd x = random_points(rng, 15, 1, 0.0, 1.0);
  const VectorXd y = prior_draw(se1(0.3, 1.0), x, rng);
  const auto a = optimize_hyperparameters(x, y);
  const auto b = optimize_hyperparameters(x, 2.0 * y);
  CHECK(b.kernel.signal_variance / a.kernel.signal_variance == doctest::Approx(4.0).epsilon(0.1));
  CHECK(b.kernel.lengthscales(0) / a.kernel.lengthscales(0) == doctest::Approx(1.0).epsilon(0.1));
  const auto c = optimize_hyperparameters(x, y);
  CHECK(c.kernel.lengthscales(0) == a.kernel.lengthscales(0));
  CHECK(c.kernel.signal_variance == a.kernel.signal_variance);
}

TEST_CASE("too few points for hyperparameter fitting") {
  CHECK_THROWS_AS(optimize_hyperparameters(col({0.0, 1.0}), VectorXd::Zero(2)), InputError);
}

TEST_CASE("closed-form LOO matches literal refits") {
  Rng rng(43);
  const MatrixXd x = random_points(rng, 9, 2, 0.0, 1.0);
  const VectorXd y = rng.normal_vector(9);
  const Kernel k = Kernel::squared_exponential((VectorXd(2) << 0.4, 0.6).finished(), 1.1);
  for (double noise : {0.0, 0.02}) {
    const GpEmulator gp = fit_gp(x, y, k, MeanFunction::constant(0.2), noise);
    const auto loo = loo_diagnostics(gp);
    REQUIRE(loo.size() == 9);
    for (Index i = 0; i < 9; ++i) {
      MatrixXd xr(8, 2);
      VectorXd yr(8);
      for (Index j = 0, r = 0; j < 9; ++j) {
        if (j == i) continue;
        xr.row(r) = x.row(j);
        yr(r++) = y(j);
      }
      const auto p = fit_gp(xr, yr, k, MeanFunction::constant(0.2), noise).predict_marginal(x.row(i));
      CHECK(std::abs(loo[static_cast<std::size_t>(i)].mean - p.mean(0)) <= 1e-6);
      CHECK(std::abs(loo[static_cast<std::size_t>(i)].variance - p.variance(0)) <= 1e-6);
      const double z = (y(i) - p.mean(0)) / std::sqrt(p.variance(0) + noise);
      CHECK(std::abs(loo[static_cast<std::size_t>(i)].standardized_residual - z) <= 1e-5);
    }
  }
}

TEST_CASE("LOO residuals are calibrated on well-specified data") {
  double total = 0.0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(500 + static_cast<std::uint64_t>(s));
    const MatrixXd x = random_points(rng, 50, 1, 0.0, 5.0);
    const Kernel k = se1(0.5, 1.0);
    const double noise = 0.01;
    VectorXd y = prior_draw(k, x, rng);
    for (Index i = 0; i < y.size(); ++i) y(i) += std::sqrt(noise) * rng.normal();
    const auto loo = loo_diagnostics(fit_gp(x, y, k, MeanFunction::zero(), noise));
    double m = 0.0;
    for (const auto& r : loo) m += r.standardized_residual * r.standardized_residual;
    total += m / static_cast<double>(loo.size());
  }
  const double avg = total / seeds;
  CHECK(avg >= 0.5);
  CHECK(avg <= 1.5);
}

TEST_CASE("LOO symmetry") {
  const MatrixXd x = col({-1.0, -0.4, 0.0, 0.4, 1.0});
  const VectorXd y = (VectorXd(5) << 0.5, -0.2, 1.0, -0.2, 0.5).finished();
  const auto loo = loo_diagnostics(fit_gp(x, y, se1(0.5), MeanFunction::zero(), 0.0));
  CHECK(loo[0].log_score == doctest::Approx(loo[4].log_score).epsilon(1e-9));
  CHECK(loo[1].log_score == doctest::Approx(loo[3].log_score).epsilon(1e-9));
  CHECK_THROWS_AS(loo_diagnostics(fit_gp(col({0.0}), VectorXd::Zero(1), se1(1.0), MeanFunction::zero(), 0.0)),
                  InputError);
}

TEST_CASE("multi-output emulator") {
  const MatrixXd x = col({0.0, 0.5, 1.0});
  std::vector<GpEmulator> parts{
      fit_gp(x, (VectorXd(3) << 1.0, 2.0, 3.0).finished(), se1(0.5), MeanFunction::zero(), 0.0),
      fit_gp(x, (VectorXd(3) << -1.0, 0.0, 1.0).finished(), se1(0.3, 2.0), MeanFunction::zero(), 0.0)};
  const MultiOutputGp mo(parts);
  const auto [mean, var] = mo.predict_marginal(x);
  CHECK(std::abs(mean(1, 0) - 2.0) <= 1e-8);
  CHECK(std::abs(mean(2, 1) - 1.0) <= 1e-8);
  const MatrixXd resp = (MatrixXd(1, 2) << 2.5, 0.5).finished();
  const MultiOutputGp up = mo.update(col({0.75}), resp);
  CHECK(up.size() == 4);
  CHECK(std::abs(up.predict_marginal(col({0.75})).first(0, 1) - 0.5) <= 1e-8);
  const MatrixXd cv = mo.conditional_variance(col({0.75}), col({0.75}));
  CHECK(cv.maxCoeff() <= 1e-8);
}
