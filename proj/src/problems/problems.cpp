#include "surro/problems.hpp"

#include <cmath>
#include <limits>

#include "surro/errors.hpp"
#include "surro/log.hpp"

namespace surro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_box(const VectorXd& lower, const VectorXd& upper) {
  if (lower.size() == 0 || lower.size() != upper.size()) throw InputError("prior: bounds have inconsistent size");
  for (Index i = 0; i < lower.size(); ++i)
    if (!(lower(i) < upper(i)) || !std::isfinite(lower(i)) || !std::isfinite(upper(i)))
      throw InputError("prior: need finite lower < upper in every dimension");
}

VectorXd apply_summary(const SummaryMap& s, const VectorXd& y) { return s ? s(y) : y; }

}  // namespace

Prior Prior::uniform(VectorXd lower, VectorXd upper) {
  check_box(lower, upper);
  Prior p;
  p.family_ = Family::Uniform;
  p.log_norm_ = -(upper - lower).array().log();
  p.mean_ = 0.5 * (lower + upper);
  p.sd_ = (upper - lower) / std::sqrt(12.0);
  p.lower_ = std::move(lower);
  p.upper_ = std::move(upper);
  return p;
}

Prior Prior::truncated_gaussian(VectorXd mean, VectorXd sd, VectorXd lower, VectorXd upper) {
  check_box(lower, upper);
  if (mean.size() != lower.size() || sd.size() != lower.size())
    throw InputError("prior: mean/sd size does not match bounds");
  if (!(sd.array() > 0.0).all()) throw InputError("prior: sd must be positive");
  Prior p;
  p.family_ = Family::TruncatedGaussian;
  p.log_norm_.resize(lower.size());
  for (Index i = 0; i < lower.size(); ++i) {
    const double mass = normal_cdf((upper(i) - mean(i)) / sd(i)) - normal_cdf((lower(i) - mean(i)) / sd(i));
    if (!(mass > 0.0)) throw InputError("prior: truncation box carries no Gaussian mass");
    p.log_norm_(i) = -std::log(sd(i)) - 0.5 * kLog2Pi - std::log(mass);
  }
  p.mean_ = std::move(mean);
  p.sd_ = std::move(sd);
  p.lower_ = std::move(lower);
  p.upper_ = std::move(upper);
  return p;
}

bool Prior::contains(const VectorXd& theta) const {
  if (theta.size() != dim()) return false;
  return (theta.array() >= lower_.array()).all() && (theta.array() <= upper_.array()).all();
}

double Prior::log_density(const VectorXd& theta) const {
  if (theta.size() != dim()) throw InputError("prior: dimension mismatch");
  if (!contains(theta)) return -kInf;
  double out = log_norm_.sum();
  if (family_ == Family::TruncatedGaussian) out -= 0.5 * ((theta - mean_).array() / sd_.array()).square().sum();
  return out;
}

VectorXd Prior::log_density_rows(const MatrixXd& points) const {
  VectorXd out(points.rows());
  for (Index i = 0; i < points.rows(); ++i) out(i) = log_density(VectorXd(points.row(i).transpose()));
  return out;
}

double Prior::cdf(Index d, double x) const {
  const double lo = lower_(d), hi = upper_(d);
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  if (family_ == Family::Uniform) return (x - lo) / (hi - lo);
  const double a = normal_cdf((lo - mean_(d)) / sd_(d));
  const double b = normal_cdf((hi - mean_(d)) / sd_(d));
  return (normal_cdf((x - mean_(d)) / sd_(d)) - a) / (b - a);
}

VectorXd Prior::sample(Rng& rng) const {
  VectorXd out(dim());
  for (Index d = 0; d < dim(); ++d) {
    if (family_ == Family::Uniform) {
      out(d) = rng.uniform(lower_(d), upper_(d));
    } else {
      const double a = normal_cdf((lower_(d) - mean_(d)) / sd_(d));
      const double b = normal_cdf((upper_(d) - mean_(d)) / sd_(d));
      const double u = a + rng.uniform() * (b - a);
      out(d) = std::clamp(mean_(d) + sd_(d) * normal_quantile(u), lower_(d), upper_(d));
    }
  }
  return out;
}

MatrixXd Prior::sample(Index n, Rng& rng) const {
  MatrixXd out(n, dim());
  for (Index i = 0; i < n; ++i) out.row(i) = sample(rng).transpose();
  return out;
}

VectorXd Prior::mode() const {
  if (family_ == Family::Uniform) return 0.5 * (lower_ + upper_);
  return mean_.cwiseMax(lower_).cwiseMin(upper_);
}

std::string target_name(const TargetKind& target) {
  switch (target.index()) {
    case 0:
      return "forward_model";
    case 1:
      return "log_likelihood";
    case 2:
      return "synthetic_likelihood";
    case 3:
      return "abc";
    default:
      return "pseudo_marginal";
  }
}

bool is_noisy(const TargetKind& target) { return target.index() >= 2; }

Index replicates_per_observation(const TargetKind& target) {
  if (const auto* t = std::get_if<SyntheticLikelihoodTarget>(&target)) return t->replicates;
  if (const auto* t = std::get_if<AbcTarget>(&target)) return t->replicates;
  if (const auto* t = std::get_if<PseudoMarginalTarget>(&target)) return t->replicates;
  return 1;
}

void InverseProblem::validate() const {
  if (prior.dim() == 0) throw InputError("problem: prior has no dimensions");
  if (observation.size() == 0 || !observation.allFinite()) throw InputError("problem: observation must be finite and non-empty");
  if (noise_cov.rows() != observation.size() || noise_cov.cols() != observation.size())
    throw InputError("problem: noise covariance shape does not match the observation");
  Eigen::LLT<MatrixXd> llt(noise_cov);
  if (llt.info() != Eigen::Success) throw InputError("problem: noise covariance is not positive definite");
  if (std::holds_alternative<ForwardModelTarget>(target) && !forward_model)
    throw InputError("problem: forward-model target without a forward model");
  if (std::holds_alternative<LogLikelihoodTarget>(target) && !has_exact_likelihood())
    throw InputError("problem: log-likelihood target without a likelihood");
  if (const auto* t = std::get_if<SyntheticLikelihoodTarget>(&target)) {
    if (t->replicates < 2) throw InputError("problem: synthetic likelihood needs at least 2 replicates");
    if (!t->simulator) throw InputError("problem: synthetic likelihood needs a simulator");
  }
  if (const auto* t = std::get_if<AbcTarget>(&target)) {
    if (t->replicates < 1) throw InputError("problem: ABC needs at least 1 replicate");
    if (!(t->epsilon > 0.0)) throw InputError("problem: ABC tolerance must be positive");
    if (!t->simulator) throw InputError("problem: ABC needs a simulator");
  }
  if (const auto* t = std::get_if<PseudoMarginalTarget>(&target)) {
    if (t->replicates < 1) throw InputError("problem: pseudo-marginal needs at least 1 replicate");
    if (!t->latent || !t->conditional) throw InputError("problem: pseudo-marginal needs latent sampler and density");
  }
}

double InverseProblem::log_likelihood(const VectorXd& theta) const {
  if (exact_log_likelihood) return exact_log_likelihood(theta);
  if (!forward_model) throw InputError("problem: no exact likelihood available");
  return gaussian_loglik(forward_model(theta), observation, noise_cov);
}

double InverseProblem::log_posterior_unnormalized(const VectorXd& theta) const {
  const double lp = prior.log_density(theta);
  if (!std::isfinite(lp)) return lp;
  return lp + log_likelihood(theta);
}

GaussianLikelihood::GaussianLikelihood(VectorXd y_obs, const MatrixXd& noise_cov) : y_(std::move(y_obs)) {
  if (noise_cov.rows() != y_.size() || noise_cov.cols() != y_.size())
    throw InputError("gaussian_loglik: covariance shape mismatch");
  Eigen::LLT<MatrixXd> llt(noise_cov);
  if (llt.info() != Eigen::Success) throw FactorizationError("gaussian_loglik: noise covariance is not positive definite");
  lower_ = llt.matrixL();
  constant_ = -0.5 * static_cast<double>(y_.size()) * kLog2Pi - 0.5 * log_det_from_cholesky(lower_);
}

double GaussianLikelihood::operator()(const VectorXd& g) const {
  if (g.size() != y_.size()) throw InputError("gaussian_loglik: model output has the wrong length");
  return constant_ - 0.5 * lower_.triangularView<Eigen::Lower>().solve(y_ - g).squaredNorm();
}

double gaussian_loglik(const VectorXd& g, const VectorXd& y_obs, const MatrixXd& noise_cov) {
  return GaussianLikelihood(y_obs, noise_cov)(g);
}

MatrixXd integrate_rk4(const OdeSpec& spec, const VectorXd& theta) {
  if (!spec.rhs) throw InputError("ode: no right-hand side");
  if (spec.steps < 1) throw InputError("ode: step count must be positive");
  if (!(spec.t1 > spec.t0)) throw InputError("ode: need t1 > t0");
  if (!theta.allFinite()) throw InputError("ode: non-finite parameter");
  const Index s = spec.initial_state.size();
  const double h = (spec.t1 - spec.t0) / static_cast<double>(spec.steps);
  MatrixXd states(spec.steps + 1, s);
  VectorXd x = spec.initial_state;
  states.row(0) = x.transpose();
  for (Index k = 0; k < spec.steps; ++k) {
    const double t = spec.t0 + static_cast<double>(k) * h;
    const VectorXd k1 = spec.rhs(t, x, theta);
    const VectorXd k2 = spec.rhs(t + 0.5 * h, x + 0.5 * h * k1, theta);
    const VectorXd k3 = spec.rhs(t + 0.5 * h, x + 0.5 * h * k2, theta);
    const VectorXd k4 = spec.rhs(t + h, x + h * k3, theta);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) throw IntegrationError("ode: state became non-finite at step " + std::to_string(k + 1), k + 1);
    states.row(k + 1) = x.transpose();
  }
  return states;
}

VectorXd ode_forward_model(const VectorXd& theta, const OdeSpec& spec, const ObservationOperator& obs) {
  const MatrixXd states = integrate_rk4(spec, theta);
  if (obs.component < 0 || obs.component >= states.cols()) throw InputError("ode: observed component out of range");
  const VectorXd path = states.col(obs.component);
  const Index k = spec.steps;
  switch (obs.kind) {
    case ObservationOperator::Kind::FinalState:
      return VectorXd::Constant(1, path(k));
    case ObservationOperator::Kind::Subsample:
    case ObservationOperator::Kind::WindowAverage: {
      if (obs.windows < 1 || k % obs.windows != 0)
        throw InputError("ode: step count must be a multiple of the observation window count");
      const Index per = k / obs.windows;
      VectorXd out(obs.windows);
      for (Index w = 0; w < obs.windows; ++w) {
        if (obs.kind == ObservationOperator::Kind::Subsample) {
          out(w) = path((w + 1) * per);
        } else {
          // Trapezoid average over the window.
          double acc = 0.5 * (path(w * per) + path((w + 1) * per));
          for (Index j = w * per + 1; j < (w + 1) * per; ++j) acc += path(j);
          out(w) = acc / static_cast<double>(per);
        }
      }
      return out;
    }
  }
  return {};
}

void SimulationLedger::record(Index calls) {
  std::lock_guard<std::mutex> lock(mutex_);
  entries_.push_back(calls);
  total_ += calls;
}

Index SimulationLedger::total_calls() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return total_;
}

Index SimulationLedger::invocations() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return static_cast<Index>(entries_.size());
}

std::vector<Index> SimulationLedger::entries() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_;
}

SimObservation sl_loglik_estimate(const VectorXd& theta, const InverseProblem& problem, Rng& rng,
                                  SimulationLedger* ledger) {
  const auto* t = std::get_if<SyntheticLikelihoodTarget>(&problem.target);
  if (!t) throw InputError("sl_loglik_estimate: problem target is not a synthetic likelihood");
  if (t->replicates < 2) throw InputError("sl_loglik_estimate: at least 2 replicates are required");
  const Index m = t->replicates;
  const VectorXd s_obs = apply_summary(t->summary, problem.observation);
  const Index s = s_obs.size();
  if (m < s + 2) logger()->warn("synthetic likelihood: {} replicates for a {}-dimensional summary", m, s);

  MatrixXd summaries(m, s);
  for (Index i = 0; i < m; ++i) {
    const VectorXd si = apply_summary(t->summary, t->simulator(theta, rng));
    if (si.size() != s) throw InputError("sl_loglik_estimate: summary dimension changed between replicates");
    summaries.row(i) = si.transpose();
  }
  if (ledger) ledger->record(m);

  const VectorXd mean = summaries.colwise().mean().transpose();
  const MatrixXd centred = summaries.rowwise() - mean.transpose();
  MatrixXd cov = centred.transpose() * centred / static_cast<double>(m - 1);
  Eigen::LLT<MatrixXd> llt(cov);
  bool ok = llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 0.0).all();
  if (!ok) {
    cov.diagonal().array() += 1e-8 * cov.trace() / static_cast<double>(s);
    llt.compute(cov);
    ok = llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 0.0).all();
    if (!ok) throw SingularCovarianceError("sl_loglik_estimate: summary covariance is singular after jitter");
  }

  SimObservation obs;
  obs.input = theta;
  obs.value = VectorXd::Constant(1, log_normal_density(s_obs, mean, cov));
  obs.replicates = m;
  obs.simulator_calls = m;
  return obs;
}

SimObservation abc_loglik_estimate(const VectorXd& theta, const InverseProblem& problem, Rng& rng,
                                   SimulationLedger* ledger) {
  const auto* t = std::get_if<AbcTarget>(&problem.target);
  if (!t) throw InputError("abc_loglik_estimate: problem target is not ABC");
  if (t->replicates < 1 || !(t->epsilon > 0.0)) throw InputError("abc_loglik_estimate: need M >= 1 and epsilon > 0");
  const Index m = t->replicates;
  const VectorXd s_obs = apply_summary(t->summary, problem.observation);
  Index accepted = 0;
  for (Index i = 0; i < m; ++i) {
    const VectorXd si = apply_summary(t->summary, t->simulator(theta, rng));
    if ((si - s_obs).norm() < t->epsilon) ++accepted;
  }
  if (ledger) ledger->record(m);

  SimObservation obs;
  obs.input = theta;
  obs.replicates = m;
  obs.simulator_calls = m;
  const double md = static_cast<double>(m);
  if (accepted == 0) {
    obs.floored = true;
    obs.value = VectorXd::Constant(1, -std::log(md * (md + 1.0)));
  } else {
    obs.value = VectorXd::Constant(1, std::log(static_cast<double>(accepted) / md));
  }
  return obs;
}

SimObservation pseudo_marginal_loglik_estimate(const VectorXd& theta, const InverseProblem& problem, Rng& rng,
                                               SimulationLedger* ledger) {
  const auto* t = std::get_if<PseudoMarginalTarget>(&problem.target);
  if (!t) throw InputError("pseudo_marginal_loglik_estimate: problem target is not pseudo-marginal");
  if (t->replicates < 1) throw InputError("pseudo_marginal_loglik_estimate: need M >= 1");
  const Index m = t->replicates;
  VectorXd logs(m);
  for (Index i = 0; i < m; ++i) logs(i) = t->conditional(problem.observation, theta, t->latent(theta, rng));
  if (ledger) ledger->record(m);

  SimObservation obs;
  obs.input = theta;
  obs.replicates = m;
  obs.simulator_calls = m;
  const double v = log_sum_exp(logs) - std::log(static_cast<double>(m));
  obs.degenerate = !std::isfinite(v);
  obs.value = VectorXd::Constant(1, v);
  return obs;
}

SimObservation simulate(const VectorXd& theta, const InverseProblem& problem, Rng& rng, SimulationLedger* ledger) {
  if (std::holds_alternative<SyntheticLikelihoodTarget>(problem.target))
    return sl_loglik_estimate(theta, problem, rng, ledger);
  if (std::holds_alternative<AbcTarget>(problem.target)) return abc_loglik_estimate(theta, problem, rng, ledger);
  if (std::holds_alternative<PseudoMarginalTarget>(problem.target))
    return pseudo_marginal_loglik_estimate(theta, problem, rng, ledger);

  SimObservation obs;
  obs.input = theta;
  obs.replicates = 1;
  obs.simulator_calls = 1;
  if (std::holds_alternative<ForwardModelTarget>(problem.target)) {
    obs.value = problem.forward_model(theta);
  } else {
    obs.value = VectorXd::Constant(1, problem.log_likelihood(theta));
  }
  if (!obs.value.allFinite()) throw IntegrationError("simulator returned non-finite output", 0);
  if (ledger) ledger->record(1);
  return obs;
}

VectorXd grid_posterior_oracle(const InverseProblem& problem, const Grid& grid) {
  if (grid.dim() != problem.dim()) throw InputError("grid_posterior_oracle: grid dimension does not match the problem");
  if (grid.dim() > 2) throw InputError("grid_posterior_oracle: at most two dimensions");
  for (Index d = 0; d < grid.dim(); ++d)
    if (grid.nodes(d) < 32) throw InputError("grid_posterior_oracle: grid too coarse (need >= 32 nodes per dimension)");
  if (!problem.has_exact_likelihood()) throw InputError("grid_posterior_oracle: no exact likelihood available");
  VectorXd logp(grid.size());
  for (Index i = 0; i < grid.size(); ++i) logp(i) = problem.log_posterior_unnormalized(grid.points().row(i).transpose());
  return normalize_on_grid(logp, grid);
}

namespace {

std::shared_ptr<InverseProblem> make_conjugate() {
  auto p = std::make_shared<InverseProblem>();
  p->name = "conjugate";
  p->prior = Prior::truncated_gaussian(VectorXd::Zero(1), VectorXd::Ones(1), VectorXd::Constant(1, -5.0),
                                       VectorXd::Constant(1, 5.0));
  p->observation = VectorXd::Constant(1, 1.0);
  p->noise_cov = MatrixXd::Constant(1, 1, 0.25);
  p->forward_model = [](const VectorXd& th) { return th; };
  return p;
}

std::shared_ptr<InverseProblem> make_bimodal() {
  auto p = std::make_shared<InverseProblem>();
  p->name = "bimodal";
  p->prior = Prior::uniform(VectorXd::Constant(1, -2.0), VectorXd::Constant(1, 2.0));
  p->observation = VectorXd::Constant(1, 1.0);
  p->noise_cov = MatrixXd::Constant(1, 1, 0.09);
  p->forward_model = [](const VectorXd& th) { return th.array().square().matrix().eval(); };
  return p;
}

std::shared_ptr<InverseProblem> make_ode() {
  auto p = std::make_shared<InverseProblem>();
  p->name = "ode";
  p->prior = Prior::uniform((VectorXd(2) << 0.1, 0.0).finished(), (VectorXd(2) << 1.5, 1.0).finished());
  OdeSpec spec;
  spec.rhs = [](double, const VectorXd& x, const VectorXd& th) { return (-th(0) * x.array() + th(1)).matrix().eval(); };
  spec.initial_state = VectorXd::Ones(1);
  spec.t0 = 0.0;
  spec.t1 = 12.0;
  spec.steps = 240;
  ObservationOperator obs;
  obs.kind = ObservationOperator::Kind::WindowAverage;
  obs.windows = 12;
  p->forward_model = [spec, obs](const VectorXd& th) { return ode_forward_model(th, spec, obs); };
  const double sd = 0.05;
  p->noise_cov = MatrixXd::Identity(12, 12) * sd * sd;
  Rng rng(20240611);
  p->observation = p->forward_model((VectorXd(2) << 0.5, 0.3).finished()) + sd * rng.normal_vector(12);
  return p;
}

std::shared_ptr<InverseProblem> make_latent() {
  auto p = std::make_shared<InverseProblem>();
  p->name = "latent";
  p->prior = Prior::truncated_gaussian(VectorXd::Zero(1), VectorXd::Ones(1), VectorXd::Constant(1, -6.0),
                                       VectorXd::Constant(1, 6.0));
  p->observation = VectorXd::Constant(1, 1.5);
  p->noise_cov = MatrixXd::Identity(1, 1);
  PseudoMarginalTarget t;
  t.replicates = 10;
  t.latent = [](const VectorXd& th, Rng& rng) { return VectorXd::Constant(1, th(0) + rng.normal()); };
  t.conditional = [](const VectorXd& y, const VectorXd&, const VectorXd& z) {
    const double r = y(0) - z(0);
    return -0.5 * kLog2Pi - 0.5 * r * r;
  };
  p->target = t;
  p->exact_log_likelihood = [y = p->observation(0)](const VectorXd& th) {
    const double r = y - th(0);
    return -0.5 * std::log(2.0 * 2.0 * std::acos(-1.0)) - 0.25 * r * r;
  };
  return p;
}

}  // namespace

std::shared_ptr<const InverseProblem> builtin_problem(const std::string& name) {
  std::shared_ptr<InverseProblem> p;
  if (name == "conjugate") p = make_conjugate();
  else if (name == "bimodal") p = make_bimodal();
  else if (name == "ode") p = make_ode();
  else if (name == "latent") p = make_latent();
  else throw InputError("unknown built-in problem '" + name + "'");
  p->validate();
  return p;
}

std::vector<std::string> builtin_problem_names() { return {"conjugate", "bimodal", "ode", "latent"}; }

}  // namespace surro
