#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "surro/linalg.hpp"
#include "surro/rng.hpp"

namespace surro {

/// Anisotropic squared-exponential kernel
///   k(x, x') = signal_variance * exp(-0.5 * sum_d ((x_d - x'_d) / lengthscale_d)^2).
///
/// `jitter` is relative: the diagonal term added before factorisation starts at
/// jitter * signal_variance and doubles (up to eight times) on failure.
struct Kernel {
  VectorXd lengthscales;
  double signal_variance = 1.0;
  double jitter = 1e-10;

  static Kernel squared_exponential(VectorXd lengthscales, double signal_variance);

  void validate() const;
  double operator()(const VectorXd& a, const VectorXd& b) const;
  /// Cross-covariance between the rows of a and the rows of b.
  MatrixXd matrix(const MatrixXd& a, const MatrixXd& b) const;
};

struct MeanFunction {
  enum class Family { Zero, Constant, Affine };

  Family family = Family::Zero;
  double offset = 0.0;
  VectorXd slope;  // Affine only

  static MeanFunction zero() { return {}; }
  static MeanFunction constant(double c) { return {Family::Constant, c, {}}; }
  static MeanFunction affine(double c, VectorXd slope) { return {Family::Affine, c, std::move(slope)}; }

  double operator()(const VectorXd& x) const;
  VectorXd evaluate(const MatrixXd& points) const;
};

struct PredictiveDistribution {
  MatrixXd points;
  VectorXd mean;
  MatrixXd cov;
  bool includes_noise = false;
};

/// Pointwise predictive moments (no cross-covariances).
struct MarginalPrediction {
  VectorXd mean;
  VectorXd variance;
};

/// Points pre-whitened against an emulator's factor: v = L^{-1} k0(X_N, points).
/// Reused across acquisition evaluations that condition on different batches.
struct WhitenedPoints {
  MatrixXd points;
  MatrixXd v;
  VectorXd prior_variance;
  VectorXd mean;
  VectorXd variance;
};

struct UpdatedMeanLaw {
  double mean = 0.0;
  double variance = 0.0;
};

/// Gaussian-process emulator conditioned on a design.
///
/// Values are immutable once built: update() returns a new emulator, and all
/// const members are safe to call concurrently.
class GpEmulator {
 public:
  const MatrixXd& inputs() const { return inputs_; }
  const VectorXd& responses() const { return responses_; }
  const Kernel& kernel() const { return kernel_; }
  const MeanFunction& mean_function() const { return mean_; }
  double noise_variance() const { return noise_variance_; }
  /// Absolute diagonal jitter used by the cached factorisation.
  double jitter() const { return jitter_; }
  const MatrixXd& cholesky() const { return chol_; }
  const VectorXd& alpha() const { return alpha_; }
  Index size() const { return inputs_.rows(); }
  Index dim() const { return inputs_.cols(); }

  PredictiveDistribution predict(const MatrixXd& points, bool include_noise = false) const;
  MarginalPrediction predict_marginal(const MatrixXd& points) const;
  /// Posterior cross-covariance k_N(a, b).
  MatrixXd posterior_covariance(const MatrixXd& a, const MatrixXd& b) const;

  /// Block-Cholesky conditioning on extra data with the hyperparameters held fixed.
  GpEmulator update(const MatrixXd& new_inputs, const VectorXd& new_responses) const;

  WhitenedPoints whiten(const MatrixXd& points) const;

  /// Variance s^2_{N+B}(q; batch) after conditioning on the batch inputs.
  /// Responses are not needed: the predictive kernel depends on inputs only.
  VectorXd conditional_variance(const MatrixXd& batch, const MatrixXd& queries) const;
  VectorXd conditional_variance(const WhitenedPoints& batch, const WhitenedPoints& queries) const;

  /// Law of the updated predictive mean at `query` when the batch responses are
  /// drawn from the current predictive observation process.
  UpdatedMeanLaw updated_mean_law(const MatrixXd& batch, const VectorXd& query) const;

  /// n x B matrix of joint draws from the latent predictive at `points`.
  MatrixXd sample_marginal(const MatrixXd& points, Index n_draws, Rng& rng) const;

  double log_marginal_likelihood() const;

 private:
  friend GpEmulator fit_gp(MatrixXd, VectorXd, Kernel, MeanFunction, double);

  MatrixXd inputs_;
  VectorXd responses_;
  Kernel kernel_;
  MeanFunction mean_;
  double noise_variance_ = 0.0;
  double jitter_ = 0.0;
  MatrixXd chol_;
  VectorXd alpha_;
};

/// Exact conditioning of a GP prior on (inputs, responses) with Gaussian noise.
/// Noiseless duplicate inputs are rejected with DegenerateUpdateError.
GpEmulator fit_gp(MatrixXd inputs, VectorXd responses, Kernel kernel, MeanFunction mean, double noise_variance);

struct LooRecord {
  double mean = 0.0;
  double variance = 0.0;  ///< latent variance of the held-out prediction
  double standardized_residual = 0.0;
  double log_score = 0.0;
};

/// Closed-form leave-one-out predictions from the full factorisation.
std::vector<LooRecord> loo_diagnostics(const GpEmulator& gp);

/// Independent per-output GPs sharing one set of design inputs.
class MultiOutputGp {
 public:
  MultiOutputGp() = default;
  explicit MultiOutputGp(std::vector<GpEmulator> outputs);

  Index outputs() const { return static_cast<Index>(outputs_.size()); }
  const GpEmulator& output(Index p) const { return outputs_[static_cast<std::size_t>(p)]; }
  const std::vector<GpEmulator>& components() const { return outputs_; }
  const MatrixXd& inputs() const { return outputs_.front().inputs(); }
  Index size() const { return outputs_.front().size(); }
  Index dim() const { return outputs_.front().dim(); }

  /// Mean and variance as (points x outputs) matrices.
  std::pair<MatrixXd, MatrixXd> predict_marginal(const MatrixXd& points) const;
  /// Rows: queries, columns: outputs.
  MatrixXd conditional_variance(const MatrixXd& batch, const MatrixXd& queries) const;
  /// `responses` is batch x outputs.
  MultiOutputGp update(const MatrixXd& batch, const MatrixXd& responses) const;

 private:
  std::vector<GpEmulator> outputs_;
};

}  // namespace surro
