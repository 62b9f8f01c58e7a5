#include "surro/linalg.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <gsl/gsl_cdf.h>

#include "surro/errors.hpp"

namespace surro {

JitteredCholesky cholesky_with_jitter(const MatrixXd& a, double initial_jitter, int max_doublings) {
  if (a.rows() != a.cols()) throw InputError("cholesky_with_jitter: matrix is not square");
  double jitter = initial_jitter;
  for (int attempt = 0; attempt <= max_doublings; ++attempt) {
    MatrixXd shifted = a;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) {
      MatrixXd lower = llt.matrixL();
      if (lower.allFinite() && (lower.diagonal().array() > 0.0).all()) return {std::move(lower), jitter};
    }
    if (jitter <= 0.0) break;
    jitter *= 2.0;
  }
  throw FactorizationError("covariance matrix is not positive definite after jitter escalation");
}

MatrixXd psd_factor(const MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw InputError("psd_factor: matrix is not square");
  if (!cov.allFinite()) throw FactorizationError("psd_factor: non-finite covariance");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (cov + cov.transpose()));
  if (eig.info() != Eigen::Success) throw FactorizationError("psd_factor: eigendecomposition failed");
  VectorXd lambda = eig.eigenvalues();
  const double scale = std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
  if (lambda.size() > 0 && lambda.minCoeff() < -1e-8 * scale)
    throw FactorizationError("psd_factor: matrix is not positive semi-definite");
  lambda = lambda.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * lambda.asDiagonal();
}

double log_det_from_cholesky(const MatrixXd& lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

double log_normal_density(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov) {
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw FactorizationError("log_normal_density: covariance not positive definite");
  const MatrixXd lower = llt.matrixL();
  const VectorXd z = lower.triangularView<Eigen::Lower>().solve(x - mean);
  return -0.5 * static_cast<double>(x.size()) * kLog2Pi - 0.5 * log_det_from_cholesky(lower) - 0.5 * z.squaredNorm();
}

double log_sum_exp(const VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

double normal_quantile(double p) { return gsl_cdf_ugaussian_Pinv(p); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace surro
