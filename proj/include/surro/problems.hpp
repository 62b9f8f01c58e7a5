#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include "surro/grid.hpp"
#include "surro/linalg.hpp"
#include "surro/rng.hpp"

namespace surro {

/// Independent per-dimension prior on a bounded box: uniform, or Gaussian truncated to the box.
class Prior {
 public:
  enum class Family { Uniform, TruncatedGaussian };

  static Prior uniform(VectorXd lower, VectorXd upper);
  static Prior truncated_gaussian(VectorXd mean, VectorXd sd, VectorXd lower, VectorXd upper);

  Family family() const { return family_; }
  Index dim() const { return lower_.size(); }
  const VectorXd& lower() const { return lower_; }
  const VectorXd& upper() const { return upper_; }
  const VectorXd& mean() const { return mean_; }
  const VectorXd& sd() const { return sd_; }

  bool contains(const VectorXd& theta) const;
  /// Normalised log density; -inf outside the box.
  double log_density(const VectorXd& theta) const;
  VectorXd log_density_rows(const MatrixXd& points) const;
  VectorXd sample(Rng& rng) const;
  MatrixXd sample(Index n, Rng& rng) const;
  /// Marginal CDF of dimension d.
  double cdf(Index d, double x) const;
  /// Location of the density maximum.
  VectorXd mode() const;

 private:
  Family family_ = Family::Uniform;
  VectorXd lower_, upper_, mean_, sd_;
  VectorXd log_norm_;  // per-dimension log normaliser
};

using ForwardModel = std::function<VectorXd(const VectorXd& theta)>;
/// Draws one replicate y ~ p(y | theta).
using Simulator = std::function<VectorXd(const VectorXd& theta, Rng& rng)>;
/// Summary statistic; an empty function means the identity.
using SummaryMap = std::function<VectorXd(const VectorXd& y)>;
using LatentSampler = std::function<VectorXd(const VectorXd& theta, Rng& rng)>;
/// log p(y_o | theta, z)
using ConditionalLogDensity = std::function<double(const VectorXd& y_obs, const VectorXd& theta, const VectorXd& z)>;

struct ForwardModelTarget {};
struct LogLikelihoodTarget {};
struct SyntheticLikelihoodTarget {
  Index replicates = 0;
  Simulator simulator;
  SummaryMap summary;
};
struct AbcTarget {
  Index replicates = 0;
  double epsilon = 0.0;
  Simulator simulator;
  SummaryMap summary;
};
struct PseudoMarginalTarget {
  Index replicates = 0;
  LatentSampler latent;
  ConditionalLogDensity conditional;
};

using TargetKind =
    std::variant<ForwardModelTarget, LogLikelihoodTarget, SyntheticLikelihoodTarget, AbcTarget, PseudoMarginalTarget>;

std::string target_name(const TargetKind& target);
bool is_noisy(const TargetKind& target);
/// Replicates consumed by one simulator observation (1 for deterministic targets).
Index replicates_per_observation(const TargetKind& target);

struct InverseProblem {
  std::string name;
  Prior prior;
  VectorXd observation;
  MatrixXd noise_cov;
  TargetKind target = LogLikelihoodTarget{};
  ForwardModel forward_model;
  /// Exact log-likelihood for problems without a forward model (used by oracles).
  std::function<double(const VectorXd&)> exact_log_likelihood;

  Index dim() const { return prior.dim(); }
  Index outputs() const { return observation.size(); }
  void validate() const;
  bool has_exact_likelihood() const { return static_cast<bool>(forward_model) || static_cast<bool>(exact_log_likelihood); }
  /// Exact Gaussian log-likelihood through the forward model, or the supplied exact function.
  double log_likelihood(const VectorXd& theta) const;
  double log_posterior_unnormalized(const VectorXd& theta) const;
};

/// -(P/2) log 2pi - 1/2 log det Sigma - 1/2 |y_o - g|^2_Sigma
double gaussian_loglik(const VectorXd& g, const VectorXd& y_obs, const MatrixXd& noise_cov);

/// Precomputed factor of Sigma for repeated likelihood evaluations.
class GaussianLikelihood {
 public:
  GaussianLikelihood(VectorXd y_obs, const MatrixXd& noise_cov);
  double operator()(const VectorXd& g) const;

 private:
  VectorXd y_;
  MatrixXd lower_;
  double constant_;
};

struct OdeSpec {
  std::function<VectorXd(double t, const VectorXd& x, const VectorXd& theta)> rhs;
  VectorXd initial_state;
  double t0 = 0.0;
  double t1 = 1.0;
  Index steps = 200;
};

struct ObservationOperator {
  enum class Kind { FinalState, Subsample, WindowAverage };

  Kind kind = Kind::FinalState;
  Index windows = 1;    // Subsample / WindowAverage: number of outputs
  Index component = 0;  // observed state component
};

/// Fixed-step RK4 states, (steps + 1) x S.
MatrixXd integrate_rk4(const OdeSpec& spec, const VectorXd& theta);

VectorXd ode_forward_model(const VectorXd& theta, const OdeSpec& spec, const ObservationOperator& obs);

struct SimObservation {
  VectorXd input;
  VectorXd value;  // scalar for log-density targets, P-vector for forward-model targets
  Index replicates = 0;
  Index simulator_calls = 0;
  bool floored = false;     // ABC zero-acceptance floor applied
  bool degenerate = false;  // -inf pseudo-marginal estimate
};

/// Append-only count of simulator calls, safe for concurrent recording.
class SimulationLedger {
 public:
  void record(Index calls);
  Index total_calls() const;
  Index invocations() const;
  std::vector<Index> entries() const;

 private:
  mutable std::mutex mutex_;
  std::vector<Index> entries_;
  Index total_ = 0;
};

SimObservation sl_loglik_estimate(const VectorXd& theta, const InverseProblem& problem, Rng& rng,
                                  SimulationLedger* ledger = nullptr);
SimObservation abc_loglik_estimate(const VectorXd& theta, const InverseProblem& problem, Rng& rng,
                                   SimulationLedger* ledger = nullptr);
SimObservation pseudo_marginal_loglik_estimate(const VectorXd& theta, const InverseProblem& problem, Rng& rng,
                                               SimulationLedger* ledger = nullptr);

/// One observation of the problem's emulator target at theta, dispatched on the target kind.
SimObservation simulate(const VectorXd& theta, const InverseProblem& problem, Rng& rng,
                        SimulationLedger* ledger = nullptr);

/// Exact posterior on a grid (at least 32 nodes per dimension), trapezoid-normalised.
VectorXd grid_posterior_oracle(const InverseProblem& problem, const Grid& grid);

/// Built-in problems: "conjugate", "bimodal", "ode", "latent".
std::shared_ptr<const InverseProblem> builtin_problem(const std::string& name);
std::vector<std::string> builtin_problem_names();

}  // namespace surro
