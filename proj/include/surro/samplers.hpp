#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "surro/linalg.hpp"
#include "surro/problems.hpp"
#include "surro/rng.hpp"

namespace surro {

using LogDensity = std::function<double(const VectorXd&)>;
/// Noisy log-likelihood estimate; must be unbiased on the likelihood scale.
using LogLikelihoodEstimator = std::function<double(const VectorXd&, Rng&)>;
/// Called with each proposal before it is evaluated; returning true means the
/// target changed, so the current state's log density is recomputed.
using ProposalHook = std::function<bool(const VectorXd&)>;

struct MhConfig {
  Index steps = 10000;
  double burn_in = 0.25;
  VectorXd initial_scale;           // per dimension; empty = 0.1 * prior box width
  Index adaptation_window = 50;
  double target_acceptance = -1.0;  // < 0: 0.44 in one dimension, 0.234 otherwise
  std::uint64_t seed = 0;
  std::optional<VectorXd> initial_state;

  void validate(Index dim) const;
  double target_for(Index dim) const;
};

struct Chain {
  MatrixXd states;  // steps x D, including burn-in
  VectorXd log_density;
  std::vector<std::uint8_t> accepted;
  VectorXd scale_history;  // proposal scale multiplier used at each step
  Index burn_in = 0;
  Index infinite_rejections = 0;  // proposals rejected because the density was -inf

  Index steps() const { return states.rows(); }
  MatrixXd retained() const { return states.bottomRows(states.rows() - burn_in); }
  double acceptance_rate() const;
};

/// Gaussian proposal reflected back into [lower, upper]; the reflected kernel stays symmetric.
VectorXd reflect_into_box(VectorXd x, const VectorXd& lower, const VectorXd& upper);

/// Robbins-Monro adaptation of a global log proposal scale toward a target acceptance rate.
class ScaleAdapter {
 public:
  ScaleAdapter(double target, Index window) : target_(target), window_(window) {}
  void observe(bool accepted);
  double multiplier() const;

 private:
  double target_;
  Index window_;
  Index count_ = 0;
  double log_scale_ = 0.0;
};

/// Random-walk Metropolis-Hastings on `log_density` over the prior box.
/// The initial state is config.initial_state or a prior draw (up to 100 redraws).
Chain rwmh(const LogDensity& log_density, const Prior& support, const MhConfig& config);
Chain rwmh(const LogDensity& log_density, const Prior& support, const MhConfig& config, Rng& rng);
Chain rwmh(const LogDensity& log_density, const Prior& support, const MhConfig& config, Rng& rng,
           const ProposalHook& hook);

/// Pseudo-marginal MH targeting log prior + log-likelihood estimate. The estimate
/// at the current state is stored and reused until a proposal is accepted.
/// Estimator randomness is drawn from a stream split off the chain's seed.
Chain pm_mh(const LogLikelihoodEstimator& estimator, const Prior& prior, const MhConfig& config);

/// Independent chains with seeds split from config.seed, run concurrently.
std::vector<Chain> run_chains(const LogDensity& log_density, const Prior& support, const MhConfig& config,
                              int n_chains = 4);

struct ChainDiagnostics {
  VectorXd ess;   // per dimension, summed over chains
  VectorXd rhat;  // per dimension; NaN with a single chain
  double acceptance_rate = 0.0;
};

/// Autocorrelation ESS with Geyer's initial positive sequence truncation.
double effective_sample_size(const VectorXd& x);
/// Split-R-hat over equal-length chains.
double split_rhat(const std::vector<VectorXd>& chains);

ChainDiagnostics chain_diagnostics(const std::vector<Chain>& chains);
/// Diagnostics of raw sample matrices (retained draws only; acceptance rate left at 0).
ChainDiagnostics chain_diagnostics(const std::vector<MatrixXd>& samples);

}  // namespace surro
