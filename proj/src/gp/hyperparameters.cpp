#include "surro/hyperparameters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include <Eigen/QR>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_qrng.h>

#include "surro/errors.hpp"
#include "surro/log.hpp"

namespace surro {

namespace {

struct Problem {
  const MatrixXd* inputs;
  const VectorXd* responses;
  MeanFunction mean;
  Index dim;
  bool fit_noise;
  double fixed_noise;
  VectorXd lower;
  VectorXd upper;
};

struct Decoded {
  Kernel kernel;
  double noise;
};

Decoded decode(const Problem& p, const VectorXd& z) {
  Decoded d;
  d.kernel.lengthscales = z.head(p.dim).array().exp();
  d.kernel.signal_variance = std::exp(z(p.dim));
  d.noise = p.fit_noise ? std::exp(z(p.dim + 1)) : p.fixed_noise;
  return d;
}

double log_marginal(const Problem& p, const VectorXd& z) {
  const Decoded d = decode(p, z);
  try {
    return fit_gp(*p.inputs, *p.responses, d.kernel, p.mean, d.noise).log_marginal_likelihood();
  } catch (const FactorizationError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

// Clamp into the box and charge a quadratic penalty for the excursion.
double objective(const gsl_vector* x, void* params) {
  const auto& p = *static_cast<const Problem*>(params);
  VectorXd z(static_cast<Index>(x->size));
  for (Index i = 0; i < z.size(); ++i) z(i) = gsl_vector_get(x, static_cast<std::size_t>(i));
  const VectorXd clamped = z.cwiseMax(p.lower).cwiseMin(p.upper);
  const double penalty = (z - clamped).squaredNorm();
  const double lml = log_marginal(p, clamped);
  if (!std::isfinite(lml)) return 1e300;
  return -lml + 1e3 * penalty;
}

VectorXd least_squares_mean(const MatrixXd& x, const VectorXd& y, double& offset) {
  MatrixXd a(x.rows(), x.cols() + 1);
  a << VectorXd::Ones(x.rows()), x;
  const VectorXd beta = a.colPivHouseholderQr().solve(y);
  offset = beta(0);
  return beta.tail(x.cols());
}

}  // namespace

HyperparameterFit optimize_hyperparameters(const MatrixXd& inputs, const VectorXd& responses,
                                           const HyperparameterOptions& options) {
  const Index n = inputs.rows();
  const Index dim = inputs.cols();
  if (n < 3) throw InputError("optimize_hyperparameters: at least three design points are required");
  if (responses.size() != n) throw InputError("optimize_hyperparameters: inputs and responses differ in length");
  if (!inputs.allFinite() || !responses.allFinite())
    throw InputError("optimize_hyperparameters: non-finite design data");
  if (options.starts < 1) throw InputError("optimize_hyperparameters: need at least one start");

  Problem p;
  p.inputs = &inputs;
  p.responses = &responses;
  p.dim = dim;
  p.fit_noise = options.fit_noise;
  p.fixed_noise = options.noise_variance;
  switch (options.mean_family) {
    case MeanFunction::Family::Zero:
      p.mean = MeanFunction::zero();
      break;
    case MeanFunction::Family::Constant:
      p.mean = MeanFunction::constant(responses.mean());
      break;
    case MeanFunction::Family::Affine: {
      double offset = 0.0;
      VectorXd slope = least_squares_mean(inputs, responses, offset);
      p.mean = MeanFunction::affine(offset, std::move(slope));
      break;
    }
  }

  const VectorXd resid = responses - p.mean.evaluate(inputs);
  const double scale_ref = std::max(1.0, responses.squaredNorm() / static_cast<double>(n));
  const double v = std::max(resid.squaredNorm() / static_cast<double>(n), 1e-12 * scale_ref);

  const Index np = dim + 1 + (options.fit_noise ? 1 : 0);
  p.lower.resize(np);
  p.upper.resize(np);
  VectorXd start_lo(np), start_hi(np);
  for (Index j = 0; j < dim; ++j) {
    double range = inputs.col(j).maxCoeff() - inputs.col(j).minCoeff();
    if (!(range > 0.0)) range = 1.0;
    p.lower(j) = std::log(0.01 * range);
    p.upper(j) = std::log(10.0 * range);
    start_lo(j) = std::log(0.05 * range);
    start_hi(j) = std::log(2.0 * range);
  }
  p.lower(dim) = std::log(1e-6 * v);
  p.upper(dim) = std::log(1e3 * v);
  start_lo(dim) = std::log(0.1 * v);
  start_hi(dim) = std::log(10.0 * v);
  if (options.fit_noise) {
    p.lower(dim + 1) = std::log(1e-10 * v);
    p.upper(dim + 1) = std::log(v);
    start_lo(dim + 1) = std::log(1e-6 * v);
    start_hi(dim + 1) = std::log(0.1 * v);
  }

  std::unique_ptr<gsl_qrng, decltype(&gsl_qrng_free)> sobol(
      gsl_qrng_alloc(gsl_qrng_sobol, static_cast<unsigned>(np)), gsl_qrng_free);
  std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> nm(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, static_cast<std::size_t>(np)),
      gsl_multimin_fminimizer_free);
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(static_cast<std::size_t>(np)),
                                                           gsl_vector_free);
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> step(gsl_vector_alloc(static_cast<std::size_t>(np)),
                                                              gsl_vector_free);
  gsl_vector_set_all(step.get(), 0.5);
  gsl_multimin_function fn{&objective, static_cast<std::size_t>(np), &p};

  HyperparameterFit best;
  best.log_marginal_likelihood = -std::numeric_limits<double>::infinity();
  VectorXd best_z;
  std::vector<double> u(static_cast<std::size_t>(np));
  for (int s = 0; s < options.starts; ++s) {
    gsl_qrng_get(sobol.get(), u.data());
    VectorXd z0(np);
    for (Index i = 0; i < np; ++i) {
      // Offset the Sobol points so the first start is not a box corner.
      const double ui = std::fmod(u[static_cast<std::size_t>(i)] + 0.5, 1.0);
      z0(i) = start_lo(i) + ui * (start_hi(i) - start_lo(i));
    }
    const double lml0 = log_marginal(p, z0);
    best.start_log_marginal_likelihoods.push_back(lml0);
    if (!std::isfinite(lml0)) continue;
    if (lml0 > best.log_marginal_likelihood) {
      best.log_marginal_likelihood = lml0;
      best_z = z0;
    }

    for (Index i = 0; i < np; ++i) gsl_vector_set(x.get(), static_cast<std::size_t>(i), z0(i));
    gsl_multimin_fminimizer_set(nm.get(), &fn, x.get(), step.get());
    for (int it = 0; it < options.max_iterations; ++it) {
      if (gsl_multimin_fminimizer_iterate(nm.get()) != GSL_SUCCESS) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(nm.get()), 1e-5) == GSL_SUCCESS) break;
    }
    VectorXd z(np);
    for (Index i = 0; i < np; ++i) z(i) = gsl_vector_get(nm->x, static_cast<std::size_t>(i));
    z = z.cwiseMax(p.lower).cwiseMin(p.upper);
    const double lml = log_marginal(p, z);
    if (std::isfinite(lml) && lml > best.log_marginal_likelihood) {
      best.log_marginal_likelihood = lml;
      best_z = z;
    }
  }
  if (best_z.size() == 0) throw FittingError("optimize_hyperparameters: every start failed to factorise");

  const Decoded d = decode(p, best_z);
  best.kernel = d.kernel;
  best.noise_variance = d.noise;
  best.mean = p.mean;
  logger()->debug("hyperparameters: lml {} sv {} noise {}", best.log_marginal_likelihood,
                  best.kernel.signal_variance, best.noise_variance);
  return best;
}

GpEmulator fit_gp(const MatrixXd& inputs, const VectorXd& responses, const HyperparameterFit& fit) {
  return fit_gp(inputs, responses, fit.kernel, fit.mean, fit.noise_variance);
}

}  // namespace surro
