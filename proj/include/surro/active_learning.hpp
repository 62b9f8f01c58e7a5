#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "surro/estimators.hpp"
#include "surro/hyperparameters.hpp"

namespace surro {

enum class AcquisitionKind { MaxVarLdens, EcuVarLdens, EcuVarFwd, WeightedIvar, PosteriorSample, Random };

struct Acquisition {
  AcquisitionKind kind = AcquisitionKind::EcuVarLdens;
  double mix_weight = 0.5;  // PosteriorSample only

  void validate() const;
  /// Criteria that are minimised over candidate batches (everything but the sampling kinds).
  bool is_criterion() const { return kind != AcquisitionKind::PosteriorSample && kind != AcquisitionKind::Random; }
};

std::string acquisition_name(AcquisitionKind kind);
AcquisitionKind parse_acquisition(const std::string& name);

enum class BatchStrategy { Exhaustive, KrigingBeliever, ConstantLiar, DirectSampling };

std::string strategy_name(BatchStrategy strategy);
BatchStrategy parse_strategy(const std::string& name);

struct BatchOptions {
  BatchStrategy strategy = BatchStrategy::KrigingBeliever;
  Index candidates = 256;
  std::optional<double> liar;  // ConstantLiar value; default: smallest response of each output
};

/// Points and weights of the integration measure rho.
struct RhoMeasure {
  MatrixXd points;
  VectorXd weights;  // nonnegative, sum 1
  bool degenerate = false;  // one node carries more than 0.99 of the mass

  static RhoMeasure prior_samples(const Prior& prior, Index j, Rng& rng);
  static RhoMeasure grid(const Grid& grid);
  /// Prior draws with self-normalised weights proportional to the EUP likelihood factor.
  static RhoMeasure eup_weighted(const SurrogatePosterior& sp, Index j, Rng& rng);

  void validate(Index dim) const;
  double effective_size() const;
};

struct AcquisitionValue {
  double value = 0.0;
  Index overflowed = 0;  // nodes or points whose variance overflowed
};

/// Log of one node's expected conditional variance for a log-density emulator with
/// current moments (mean, var) and one-step-ahead variance var_after. `tau_power`
/// multiplies the exponent of the variance-reduction factor; 1 is the exact value.
double log_ecu_ldens_node(double log_prior, double mean, double var, double var_after, double tau_power = 1.0);
/// Same for a forward-model emulator under a Gaussian likelihood.
double log_ecu_fwd_node(double log_prior, const VectorXd& mean, const VectorXd& var, const VectorXd& var_after,
                        const VectorXd& y_obs, const MatrixXd& noise_cov);

/// Negated log-normal pushforward variance at theta; overflow gives -inf.
AcquisitionValue acq_maxvar_ldens(const SurrogatePosterior& sp, const VectorXd& theta);
/// Expected conditional variance of the log-normal density integrated over rho.
AcquisitionValue acq_ecu_var_ldens(const SurrogatePosterior& sp, const MatrixXd& batch, const RhoMeasure& rho);
/// Expected conditional variance of the Gaussian-likelihood density integrated over rho.
AcquisitionValue acq_ecu_var_fwd(const SurrogatePosterior& sp, const MatrixXd& batch, const RhoMeasure& rho);
/// Weighted one-step-ahead predictive variance, summed over outputs.
AcquisitionValue acq_weighted_ivar(const SurrogatePosterior& sp, const MatrixXd& batch, const RhoMeasure& rho);

/// Current integrated pushforward variance (the ECU value of an uninformative batch).
double integrated_variance(const SurrogatePosterior& sp, const RhoMeasure& rho);

/// Acquisition of a batch under a criterion kind.
AcquisitionValue evaluate_acquisition(AcquisitionKind kind, const SurrogatePosterior& sp, const MatrixXd& batch,
                                      const RhoMeasure& rho);

struct BatchSelection {
  MatrixXd points;
  VectorXd values;  // acquisition of each point at the time it was chosen
};

/// Greedy candidate search. With one point this is the exhaustive argmin; later
/// points are chosen after imputing pseudo-responses at the earlier ones
/// (predictive mean for Kriging Believer, a constant for Constant Liar).
/// Ties go to the lowest candidate index.
BatchSelection optimize_batch(const Acquisition& acq, const SurrogatePosterior& sp, Index batch_size,
                              const BatchOptions& options, const MatrixXd& candidates, const RhoMeasure& rho);

/// Draws from the piecewise-linear interpolant of a grid density.
MatrixXd sample_grid_density(const VectorXd& density, const Grid& grid, Index n, Rng& rng);

/// Independent draws from w * estimate + (1 - w) * prior. Points that coincide with
/// `design` are moved by 1e-6 of `lengthscales`.
MatrixXd sample_batch(const PosteriorEstimate& estimate, const Prior& prior, Index batch_size, double mix_weight,
                      Rng& rng, const MatrixXd& design = MatrixXd(), const VectorXd& lengthscales = VectorXd());

/// beta_t = (t / T)^2 for t = 0..T.
std::vector<double> tempering_schedule(Index rounds);
/// Stored log-likelihood responses rescaled to the tempered target beta * log L.
VectorXd temper_responses(const VectorXd& log_likelihoods, double beta);

struct ActiveLearningConfig {
  Index initial_design = 4;  // N0
  Index rounds = 5;          // T
  Index batch_size = 2;      // B
  Acquisition acquisition;
  BatchOptions batch;
  Index rho_samples = 64;
  EstimatorKind estimator = EstimatorKind::PlugIn;  // metric and posterior-sample draws
  double quantile_alpha = 0.5;
  Index ep_trajectories = 64;
  bool tempering = false;
  bool reoptimize = true;  // refit hyperparameters every round
  HyperparameterOptions hyper;
  Index oracle_nodes = 256;  // per dimension
  std::uint64_t seed = 0;
  int threads = 0;

  void validate() const;
};

struct RoundRecord {
  Index round = 0;
  double beta = 1.0;
  MatrixXd batch;      // points accepted this round (round 0: initial design)
  MatrixXd responses;  // raw simulator responses, one row per point
  VectorXd acquisition;
  Index dropped = 0;   // batch points whose simulation failed
  double tv_to_oracle = std::numeric_limits<double>::quiet_NaN();
  Index cumulative_calls = 0;
  MultiOutputGp emulator;  // fitted after augmenting with this round's batch
};

struct DesignHistory {
  std::vector<RoundRecord> rounds;
  MatrixXd design;
  MatrixXd responses;
  Index simulator_calls = 0;

  double final_tv() const { return rounds.empty() ? std::numeric_limits<double>::quiet_NaN() : rounds.back().tv_to_oracle; }
};

/// Emulated quantity of a problem's target: the forward model for ForwardModelTarget, else the log-likelihood.
EmulatedQuantity emulated_quantity(const InverseProblem& problem);

/// Fit one GP per output with optimised hyperparameters (or the given previous fit).
MultiOutputGp fit_emulator(const MatrixXd& x, const MatrixXd& y, const HyperparameterOptions& options,
                           std::vector<HyperparameterFit>* fits = nullptr,
                           const std::vector<HyperparameterFit>* reuse = nullptr);

/// Surrogate posterior for round t's target: log-likelihood responses scaled by beta,
/// or the Gaussian noise covariance divided by beta for forward-model targets.
SurrogatePosterior tempered_surrogate(std::shared_ptr<const InverseProblem> problem, const MatrixXd& x,
                                      const MatrixXd& raw_responses, double beta, const HyperparameterOptions& options,
                                      const std::vector<HyperparameterFit>* reuse = nullptr,
                                      std::vector<HyperparameterFit>* fits = nullptr);

/// Metric grid over the prior box: oracle_nodes per axis in 1-D; in 2-D at most 64,
/// or 32 for EP whose trajectories are drawn jointly on the grid. Empty above two dimensions.
std::optional<Grid> metric_grid(const InverseProblem& problem, const ActiveLearningConfig& config);

/// TV distance between the configured estimator and an oracle density on `grid`.
double oracle_tv(const SurrogatePosterior& sp, const ActiveLearningConfig& config, const Grid& grid,
                 const VectorXd& oracle, Rng& rng);

DesignHistory run_active_learning(std::shared_ptr<const InverseProblem> problem, const ActiveLearningConfig& config);

struct RefinementResult {
  Chain chain;
  MultiOutputGp emulator;  // after all refinements
  MatrixXd refined_points;
  Index refinements = 0;
};

/// Random-walk MH on the plug-in log density of a log-likelihood emulator. A proposal
/// whose predictive variance exceeds `threshold` is simulated and added to the design
/// while budget remains.
RefinementResult mh_with_refinement(const InverseProblem& problem, const GpEmulator& emulator, double threshold,
                                    Index budget, const MhConfig& config);

}  // namespace surro
