#include "surro/gp.hpp"

#include <cmath>
#include <numbers>

#include "surro/errors.hpp"
#include "surro/log.hpp"

namespace surro {

namespace {

void check_finite(const MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw InputError(std::string(what) + ": non-finite values");
}

bool has_duplicate_rows(const MatrixXd& a, const MatrixXd& b, bool same) {
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = same ? i + 1 : 0; j < b.rows(); ++j)
      if (a.row(i) == b.row(j)) return true;
  return false;
}

VectorXd clamp_variance(VectorXd v) {
  for (Index i = 0; i < v.size(); ++i) {
    if (v(i) < 0.0) {
      if (v(i) < -1e-10) logger()->debug("clamped negative predictive variance {}", v(i));
      v(i) = 0.0;
    }
  }
  return v;
}

}  // namespace

Kernel Kernel::squared_exponential(VectorXd lengthscales, double signal_variance) {
  Kernel k;
  k.lengthscales = std::move(lengthscales);
  k.signal_variance = signal_variance;
  k.validate();
  return k;
}

void Kernel::validate() const {
  if (lengthscales.size() == 0) throw InputError("kernel: no lengthscales");
  if (!(lengthscales.array() > 0.0).all() || !lengthscales.allFinite())
    throw InputError("kernel: lengthscales must be positive and finite");
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
    throw InputError("kernel: signal variance must be positive and finite");
  if (!(jitter > 0.0)) throw InputError("kernel: jitter must be positive");
}

double Kernel::operator()(const VectorXd& a, const VectorXd& b) const {
  return signal_variance * std::exp(-0.5 * ((a - b).array() / lengthscales.array()).square().sum());
}

MatrixXd Kernel::matrix(const MatrixXd& a, const MatrixXd& b) const {
  if (a.cols() != lengthscales.size() || b.cols() != lengthscales.size())
    throw InputError("kernel: input dimension does not match lengthscales");
  const Eigen::RowVectorXd inv = lengthscales.cwiseInverse().transpose();
  const MatrixXd as = a.array().rowwise() * inv.array();
  const MatrixXd bs = b.array().rowwise() * inv.array();
  MatrixXd out(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      out(i, j) = signal_variance * std::exp(-0.5 * (as.row(i) - bs.row(j)).squaredNorm());
  return out;
}

double MeanFunction::operator()(const VectorXd& x) const {
  switch (family) {
    case Family::Zero:
      return 0.0;
    case Family::Constant:
      return offset;
    case Family::Affine:
      return offset + slope.dot(x);
  }
  return 0.0;
}

VectorXd MeanFunction::evaluate(const MatrixXd& points) const {
  switch (family) {
    case Family::Zero:
      return VectorXd::Zero(points.rows());
    case Family::Constant:
      return VectorXd::Constant(points.rows(), offset);
    case Family::Affine:
      if (slope.size() != points.cols()) throw InputError("mean function: affine slope dimension mismatch");
      return (points * slope).array() + offset;
  }
  return VectorXd::Zero(points.rows());
}

GpEmulator fit_gp(MatrixXd inputs, VectorXd responses, Kernel kernel, MeanFunction mean, double noise_variance) {
  if (inputs.rows() < 1) throw InputError("fit_gp: at least one design point is required");
  if (responses.size() != inputs.rows()) throw InputError("fit_gp: inputs and responses have different lengths");
  if (kernel.lengthscales.size() != inputs.cols()) throw InputError("fit_gp: kernel dimension does not match inputs");
  if (!(noise_variance >= 0.0)) throw InputError("fit_gp: noise variance must be non-negative");
  kernel.validate();
  check_finite(inputs, "fit_gp inputs");
  check_finite(responses, "fit_gp responses");
  if (noise_variance == 0.0 && has_duplicate_rows(inputs, inputs, true))
    throw DegenerateUpdateError("fit_gp: duplicate design inputs with zero noise variance");

  GpEmulator gp;
  MatrixXd k = kernel.matrix(inputs, inputs);
  k.diagonal().array() += noise_variance;
  auto factor = cholesky_with_jitter(k, kernel.jitter * kernel.signal_variance);
  gp.chol_ = std::move(factor.lower);
  gp.jitter_ = factor.jitter;
  const VectorXd residual = responses - mean.evaluate(inputs);
  gp.alpha_ = gp.chol_.triangularView<Eigen::Lower>().transpose().solve(
      gp.chol_.triangularView<Eigen::Lower>().solve(residual));
  gp.inputs_ = std::move(inputs);
  gp.responses_ = std::move(responses);
  gp.kernel_ = std::move(kernel);
  gp.mean_ = std::move(mean);
  gp.noise_variance_ = noise_variance;
  return gp;
}

PredictiveDistribution GpEmulator::predict(const MatrixXd& points, bool include_noise) const {
  check_finite(points, "predict points");
  const MatrixXd kxs = kernel_.matrix(inputs_, points);
  const MatrixXd v = chol_.triangularView<Eigen::Lower>().solve(kxs);
  PredictiveDistribution out;
  out.points = points;
  out.mean = mean_.evaluate(points) + kxs.transpose() * alpha_;
  out.cov = kernel_.matrix(points, points) - v.transpose() * v;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  out.cov.diagonal() = clamp_variance(out.cov.diagonal());
  if (include_noise) out.cov.diagonal().array() += noise_variance_;
  out.includes_noise = include_noise;
  return out;
}

MarginalPrediction GpEmulator::predict_marginal(const MatrixXd& points) const {
  check_finite(points, "predict points");
  const MatrixXd kxs = kernel_.matrix(inputs_, points);
  const MatrixXd v = chol_.triangularView<Eigen::Lower>().solve(kxs);
  MarginalPrediction out;
  out.mean = mean_.evaluate(points) + kxs.transpose() * alpha_;
  out.variance = clamp_variance((kernel_.signal_variance - v.colwise().squaredNorm().array()).matrix().transpose());
  return out;
}

MatrixXd GpEmulator::posterior_covariance(const MatrixXd& a, const MatrixXd& b) const {
  const MatrixXd va = chol_.triangularView<Eigen::Lower>().solve(kernel_.matrix(inputs_, a));
  const MatrixXd vb = chol_.triangularView<Eigen::Lower>().solve(kernel_.matrix(inputs_, b));
  return kernel_.matrix(a, b) - va.transpose() * vb;
}

GpEmulator GpEmulator::update(const MatrixXd& new_inputs, const VectorXd& new_responses) const {
  if (new_inputs.rows() == 0) return *this;
  if (new_inputs.cols() != dim()) throw InputError("update_gp: input dimension mismatch");
  if (new_responses.size() != new_inputs.rows()) throw InputError("update_gp: inputs and responses differ in length");
  check_finite(new_inputs, "update_gp inputs");
  check_finite(new_responses, "update_gp responses");
  if (noise_variance_ == 0.0 &&
      (has_duplicate_rows(new_inputs, inputs_, false) || has_duplicate_rows(new_inputs, new_inputs, true)))
    throw DegenerateUpdateError("update_gp: batch duplicates a noiseless design point");

  const Index n = size();
  const Index b = new_inputs.rows();
  const MatrixXd c = chol_.triangularView<Eigen::Lower>().solve(kernel_.matrix(inputs_, new_inputs));
  MatrixXd schur = kernel_.matrix(new_inputs, new_inputs) - c.transpose() * c;
  schur.diagonal().array() += noise_variance_ + jitter_;
  Eigen::LLT<MatrixXd> llt(schur);
  if (llt.info() != Eigen::Success)
    throw DegenerateUpdateError("update_gp: Schur complement is not positive definite (near-duplicate input)");

  GpEmulator out;
  out.inputs_.resize(n + b, dim());
  out.inputs_ << inputs_, new_inputs;
  out.responses_.resize(n + b);
  out.responses_ << responses_, new_responses;
  out.kernel_ = kernel_;
  out.mean_ = mean_;
  out.noise_variance_ = noise_variance_;
  out.jitter_ = jitter_;
  out.chol_ = MatrixXd::Zero(n + b, n + b);
  out.chol_.topLeftCorner(n, n) = chol_;
  out.chol_.bottomLeftCorner(b, n) = c.transpose();
  out.chol_.bottomRightCorner(b, b) = llt.matrixL();
  const VectorXd residual = out.responses_ - mean_.evaluate(out.inputs_);
  out.alpha_ = out.chol_.triangularView<Eigen::Lower>().transpose().solve(
      out.chol_.triangularView<Eigen::Lower>().solve(residual));
  return out;
}

WhitenedPoints GpEmulator::whiten(const MatrixXd& points) const {
  check_finite(points, "whiten points");
  WhitenedPoints w;
  w.points = points;
  const MatrixXd kxs = kernel_.matrix(inputs_, points);
  w.v = chol_.triangularView<Eigen::Lower>().solve(kxs);
  w.prior_variance = VectorXd::Constant(points.rows(), kernel_.signal_variance);
  w.mean = mean_.evaluate(points) + kxs.transpose() * alpha_;
  w.variance = clamp_variance(w.prior_variance - w.v.colwise().squaredNorm().transpose());
  return w;
}

VectorXd GpEmulator::conditional_variance(const WhitenedPoints& batch, const WhitenedPoints& queries) const {
  const Index b = batch.points.rows();
  if (b == 0) return queries.variance;
  MatrixXd schur = kernel_.matrix(batch.points, batch.points) - batch.v.transpose() * batch.v;
  schur = 0.5 * (schur + schur.transpose()).eval();
  schur.diagonal() = clamp_variance(schur.diagonal());
  schur.diagonal().array() += noise_variance_;
  const auto factor = cholesky_with_jitter(schur, jitter_);
  const MatrixXd cross = kernel_.matrix(batch.points, queries.points) - batch.v.transpose() * queries.v;  // B x Q
  const MatrixXd w = factor.lower.triangularView<Eigen::Lower>().solve(cross);
  return clamp_variance(queries.variance - w.colwise().squaredNorm().transpose());
}

VectorXd GpEmulator::conditional_variance(const MatrixXd& batch, const MatrixXd& queries) const {
  if (batch.cols() != dim() || queries.cols() != dim()) throw InputError("conditional_variance: dimension mismatch");
  return conditional_variance(whiten(batch), whiten(queries));
}

UpdatedMeanLaw GpEmulator::updated_mean_law(const MatrixXd& batch, const VectorXd& query) const {
  const MatrixXd q = query.transpose();
  const WhitenedPoints wq = whiten(q);
  const VectorXd after = conditional_variance(whiten(batch), wq);
  return {wq.mean(0), std::max(0.0, wq.variance(0) - after(0))};
}

MatrixXd GpEmulator::sample_marginal(const MatrixXd& points, Index n_draws, Rng& rng) const {
  const PredictiveDistribution pred = predict(points, false);
  const MatrixXd factor = psd_factor(pred.cov);
  const Index b = points.rows();
  MatrixXd draws(n_draws, b);
  for (Index i = 0; i < n_draws; ++i) draws.row(i) = (pred.mean + factor * rng.normal_vector(b)).transpose();
  return draws;
}

double GpEmulator::log_marginal_likelihood() const {
  const VectorXd residual = responses_ - mean_.evaluate(inputs_);
  return -0.5 * residual.dot(alpha_) - chol_.diagonal().array().log().sum() -
         0.5 * static_cast<double>(size()) * kLog2Pi;
}

std::vector<LooRecord> loo_diagnostics(const GpEmulator& gp) {
  const Index n = gp.size();
  if (n < 2) throw InputError("loo_diagnostics: at least two design points are required");
  const MatrixXd& l = gp.cholesky();
  const MatrixXd linv = l.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(n, n));
  const VectorXd kinv_diag = linv.colwise().squaredNorm().transpose();
  const double sigma2 = gp.noise_variance();
  std::vector<LooRecord> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    LooRecord& r = out[static_cast<std::size_t>(i)];
    r.mean = gp.responses()(i) - gp.alpha()(i) / kinv_diag(i);
    r.variance = std::max(0.0, 1.0 / kinv_diag(i) - sigma2 - gp.jitter());
    const double total = r.variance + sigma2;
    const double err = gp.responses()(i) - r.mean;
    r.standardized_residual = total > 0.0 ? err / std::sqrt(total) : 0.0;
    r.log_score = total > 0.0 ? -0.5 * (kLog2Pi + std::log(total) + err * err / total)
                              : -std::numeric_limits<double>::infinity();
  }
  return out;
}

MultiOutputGp::MultiOutputGp(std::vector<GpEmulator> outputs) : outputs_(std::move(outputs)) {
  if (outputs_.empty()) throw InputError("MultiOutputGp: no outputs");
  for (const auto& gp : outputs_)
    if (gp.inputs().rows() != outputs_.front().inputs().rows())
      throw InputError("MultiOutputGp: outputs must share design inputs");
}

std::pair<MatrixXd, MatrixXd> MultiOutputGp::predict_marginal(const MatrixXd& points) const {
  MatrixXd mean(points.rows(), outputs()), var(points.rows(), outputs());
  for (Index p = 0; p < outputs(); ++p) {
    const auto pred = output(p).predict_marginal(points);
    mean.col(p) = pred.mean;
    var.col(p) = pred.variance;
  }
  return {mean, var};
}

MatrixXd MultiOutputGp::conditional_variance(const MatrixXd& batch, const MatrixXd& queries) const {
  MatrixXd out(queries.rows(), outputs());
  for (Index p = 0; p < outputs(); ++p) out.col(p) = output(p).conditional_variance(batch, queries);
  return out;
}

MultiOutputGp MultiOutputGp::update(const MatrixXd& batch, const MatrixXd& responses) const {
  if (responses.cols() != outputs()) throw InputError("MultiOutputGp::update: response column count mismatch");
  std::vector<GpEmulator> next;
  next.reserve(outputs_.size());
  for (Index p = 0; p < outputs(); ++p) next.push_back(output(p).update(batch, responses.col(p)));
  return MultiOutputGp(std::move(next));
}

}  // namespace surro
