#pragma once

#include <vector>

#include "surro/gp.hpp"

namespace surro {

struct HyperparameterOptions {
  MeanFunction::Family mean_family = MeanFunction::Family::Constant;
  bool fit_noise = false;
  double noise_variance = 0.0;  // used when fit_noise is false
  int starts = 8;
  int max_iterations = 400;
};

struct HyperparameterFit {
  Kernel kernel;
  MeanFunction mean;
  double noise_variance = 0.0;
  double log_marginal_likelihood = 0.0;
  std::vector<double> start_log_marginal_likelihoods;  // NaN where a start failed to factorise
};

/// Multi-start maximisation of the log marginal likelihood over log
/// lengthscales, log signal variance and (optionally) log noise variance.
///
/// The mean function is fixed up front: the sample mean for Constant, least
/// squares for Affine. Search bounds scale with the data, so multiplying the
/// responses by c multiplies the fitted signal variance by c^2.
HyperparameterFit optimize_hyperparameters(const MatrixXd& inputs, const VectorXd& responses,
                                           const HyperparameterOptions& options = {});

GpEmulator fit_gp(const MatrixXd& inputs, const VectorXd& responses, const HyperparameterFit& fit);

}  // namespace surro
