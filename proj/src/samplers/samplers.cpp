#include "surro/samplers.hpp"

#include <cmath>
#include <limits>

#include "surro/errors.hpp"
#include "surro/log.hpp"
#include "surro/parallel.hpp"

namespace surro {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Shared MH loop. `evaluate` returns the log target at a proposal.
template <typename Eval>
Chain mh_loop(Eval&& evaluate, const Prior& support, const MhConfig& config, Rng& rng,
              const ProposalHook& hook = nullptr) {
  const Index d = support.dim();
  config.validate(d);
  VectorXd scale = config.initial_scale.size() == d ? config.initial_scale
                                                     : VectorXd(0.1 * (support.upper() - support.lower()));

  VectorXd x;
  double lx = kNegInf;
  if (config.initial_state) {
    x = *config.initial_state;
    if (!support.contains(x)) throw InitializationError("mh: initial state outside the prior support");
    lx = evaluate(x);
    if (!std::isfinite(lx)) throw InitializationError("mh: initial state has -inf log density");
  } else {
    for (int attempt = 0; attempt < 100 && !std::isfinite(lx); ++attempt) {
      x = support.sample(rng);
      lx = evaluate(x);
    }
    if (!std::isfinite(lx)) throw InitializationError("mh: no finite-density initial state after 100 prior draws");
  }

  Chain chain;
  chain.states.resize(config.steps, d);
  chain.log_density.resize(config.steps);
  chain.accepted.assign(static_cast<std::size_t>(config.steps), 0);
  chain.scale_history.resize(config.steps);
  chain.burn_in = static_cast<Index>(std::floor(config.burn_in * static_cast<double>(config.steps)));
  ScaleAdapter adapter(config.target_for(d), config.adaptation_window);

  for (Index t = 0; t < config.steps; ++t) {
    const double mult = adapter.multiplier();
    VectorXd prop = x;
    for (Index j = 0; j < d; ++j) prop(j) += mult * scale(j) * rng.normal();
    prop = reflect_into_box(std::move(prop), support.lower(), support.upper());
    if (hook && hook(prop)) lx = evaluate(x);
    const double lp = evaluate(prop);
    const double u = rng.uniform();
    bool accept = false;
    if (!std::isfinite(lp)) {
      ++chain.infinite_rejections;
    } else if (std::log(u) < lp - lx) {
      accept = true;
    }
    if (accept) {
      x = std::move(prop);
      lx = lp;
    }
    if (t < chain.burn_in) adapter.observe(accept);
    chain.states.row(t) = x.transpose();
    chain.log_density(t) = lx;
    chain.accepted[static_cast<std::size_t>(t)] = accept ? 1 : 0;
    chain.scale_history(t) = mult;
  }
  return chain;
}

}  // namespace

void MhConfig::validate(Index dim) const {
  if (steps < 1) throw InputError("mh: steps must be positive");
  if (!(burn_in > 0.0 && burn_in < 1.0)) throw InputError("mh: burn_in must lie in (0, 1)");
  if (initial_scale.size() != 0 && (initial_scale.size() != dim || !(initial_scale.array() > 0.0).all()))
    throw InputError("mh: initial_scale must be positive with one entry per dimension");
  if (adaptation_window < 1) throw InputError("mh: adaptation window must be positive");
}

double MhConfig::target_for(Index dim) const {
  if (target_acceptance > 0.0) return target_acceptance;
  return dim == 1 ? 0.44 : 0.234;
}

double Chain::acceptance_rate() const {
  if (accepted.empty()) return 0.0;
  Index n = 0;
  for (auto a : accepted) n += a;
  return static_cast<double>(n) / static_cast<double>(accepted.size());
}

VectorXd reflect_into_box(VectorXd x, const VectorXd& lower, const VectorXd& upper) {
  for (Index j = 0; j < x.size(); ++j) {
    const double lo = lower(j), hi = upper(j), w = hi - lo;
    double v = x(j);
    if (v < lo || v > hi) {
      // Fold onto [lo, lo + 2w) and mirror the upper half.
      double r = std::fmod(v - lo, 2.0 * w);
      if (r < 0.0) r += 2.0 * w;
      v = r <= w ? lo + r : hi - (r - w);
    }
    x(j) = std::clamp(v, lo, hi);
  }
  return x;
}

void ScaleAdapter::observe(bool accepted) {
  ++count_;
  const double gain = 1.0 / std::pow(1.0 + static_cast<double>(count_) / static_cast<double>(window_), 0.6);
  log_scale_ += gain * ((accepted ? 1.0 : 0.0) - target_);
  log_scale_ = std::clamp(log_scale_, -12.0, 5.0);
}

double ScaleAdapter::multiplier() const { return std::exp(log_scale_); }

Chain rwmh(const LogDensity& log_density, const Prior& support, const MhConfig& config, Rng& rng) {
  return mh_loop([&](const VectorXd& x) { return log_density(x); }, support, config, rng);
}

Chain rwmh(const LogDensity& log_density, const Prior& support, const MhConfig& config, Rng& rng,
           const ProposalHook& hook) {
  return mh_loop([&](const VectorXd& x) { return log_density(x); }, support, config, rng, hook);
}

Chain rwmh(const LogDensity& log_density, const Prior& support, const MhConfig& config) {
  Rng rng(config.seed);
  return rwmh(log_density, support, config, rng);
}

Chain pm_mh(const LogLikelihoodEstimator& estimator, const Prior& prior, const MhConfig& config) {
  Rng rng(config.seed);
  Rng est_rng = rng.split(0x9e3779b9ULL);
  return mh_loop(
      [&](const VectorXd& x) {
        const double lp = prior.log_density(x);
        if (!std::isfinite(lp)) return kNegInf;
        const double ll = estimator(x, est_rng);
        if (std::isnan(ll)) return kNegInf;
        return lp + ll;
      },
      prior, config, rng);
}

std::vector<Chain> run_chains(const LogDensity& log_density, const Prior& support, const MhConfig& config,
                              int n_chains) {
  if (n_chains < 1) throw InputError("run_chains: need at least one chain");
  std::vector<Chain> out(static_cast<std::size_t>(n_chains));
  const Rng root(config.seed);
  parallel_for(static_cast<std::size_t>(n_chains), [&](std::size_t c) {
    Rng rng = root.split(c);
    out[c] = rwmh(log_density, support, config, rng);
  });
  return out;
}

double effective_sample_size(const VectorXd& x) {
  const Index n = x.size();
  if (n < 4) return static_cast<double>(n);
  const VectorXd c = x.array() - x.mean();
  const double var = c.squaredNorm() / static_cast<double>(n);
  if (!(var > 0.0)) return static_cast<double>(n);
  auto rho = [&](Index lag) {
    return c.head(n - lag).dot(c.tail(n - lag)) / (static_cast<double>(n) * var);
  };
  // Geyer: sum consecutive pairs while positive, enforce monotone decrease.
  double sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Index k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    sum += pair;
    prev_pair = pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(static_cast<double>(n)));
  return static_cast<double>(n) / tau;
}

double split_rhat(const std::vector<VectorXd>& chains) {
  if (chains.size() < 2) throw InputError("split_rhat: need at least two chains");
  const Index n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw InputError("split_rhat: chains have unequal length");
  const Index half = n / 2;
  if (half < 2) throw InputError("split_rhat: chains too short");
  std::vector<VectorXd> parts;
  for (const auto& c : chains) {
    parts.emplace_back(c.head(half));
    parts.emplace_back(c.segment(n - half, half));
  }
  const double m = static_cast<double>(parts.size());
  const double len = static_cast<double>(half);
  VectorXd means(parts.size()), vars(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    means(static_cast<Index>(i)) = parts[i].mean();
    vars(static_cast<Index>(i)) = (parts[i].array() - parts[i].mean()).square().sum() / (len - 1.0);
  }
  const double b = len * (means.array() - means.mean()).square().sum() / (m - 1.0);
  const double w = vars.mean();
  if (!(w > 0.0)) return b > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double var_plus = (len - 1.0) / len * w + b / len;
  return std::sqrt(var_plus / w);
}

ChainDiagnostics chain_diagnostics(const std::vector<MatrixXd>& samples) {
  if (samples.empty()) throw InputError("chain_diagnostics: no chains");
  const Index d = samples.front().cols();
  const Index n = samples.front().rows();
  for (const auto& s : samples)
    if (s.rows() != n || s.cols() != d) throw InputError("chain_diagnostics: chains have unequal length");
  ChainDiagnostics out;
  out.ess = VectorXd::Zero(d);
  out.rhat = VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN());
  for (Index j = 0; j < d; ++j) {
    std::vector<VectorXd> cols;
    for (const auto& s : samples) {
      cols.emplace_back(s.col(j));
      out.ess(j) += effective_sample_size(cols.back());
    }
    if (samples.size() >= 2) out.rhat(j) = split_rhat(cols);
  }
  return out;
}

ChainDiagnostics chain_diagnostics(const std::vector<Chain>& chains) {
  std::vector<MatrixXd> samples;
  double acc = 0.0;
  for (const auto& c : chains) {
    samples.push_back(c.retained());
    acc += c.acceptance_rate();
  }
  ChainDiagnostics out = chain_diagnostics(samples);
  out.acceptance_rate = chains.empty() ? 0.0 : acc / static_cast<double>(chains.size());
  return out;
}

}  // namespace surro
