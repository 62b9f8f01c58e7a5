#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace surro {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct JitteredCholesky {
  MatrixXd lower;
  double jitter = 0.0;  ///< diagonal term actually added
};

/// Cholesky factor of A + jitter*I. On failure the jitter is doubled, up to
/// `max_doublings` times, before a FactorizationError is thrown.
JitteredCholesky cholesky_with_jitter(const MatrixXd& a, double initial_jitter, int max_doublings = 8);

/// A factor F with F F^T = cov for a symmetric positive semi-definite matrix.
/// Symmetric eigendecomposition with round-off negative eigenvalues clamped to
/// zero; clearly negative ones raise FactorizationError.
MatrixXd psd_factor(const MatrixXd& cov);

double log_det_from_cholesky(const MatrixXd& lower);

/// log N(x | mean, cov); throws FactorizationError if cov is not positive definite.
double log_normal_density(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov);

/// Numerically stable log(sum(exp(v))). Returns -inf for an all -inf vector.
double log_sum_exp(const VectorXd& v);

/// Standard-normal quantile.
double normal_quantile(double p);

double normal_cdf(double x);

}  // namespace surro
