#include "surro/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "surro/active_learning.hpp"
#include "surro/errors.hpp"
#include "surro/parallel.hpp"

namespace surro {

namespace {

constexpr double kLo = -2.0;
constexpr double kHi = 2.0;

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const VectorXd& x) {
  const double n = static_cast<double>(x.size());
  const double m = x.mean();
  return {m, std::sqrt((x.array() - m).square().sum() / (n - 1.0) / n)};
}

// Sample variance with the standard error from the fourth central moment.
MeanSe variance_se(const VectorXd& x) {
  const double n = static_cast<double>(x.size());
  const VectorXd c = (x.array() - x.mean()).matrix();
  const double m2 = c.squaredNorm() / n;
  const double m4 = c.array().pow(4).sum() / n;
  return {m2 * n / (n - 1.0), std::sqrt(std::max(0.0, m4 - m2 * m2) / n)};
}

VerifyCheck z_check(Index instance, std::string quantity, double closed, const MeanSe& mc, double limit) {
  VerifyCheck c;
  c.instance = instance;
  c.quantity = std::move(quantity);
  c.closed_form = closed;
  c.monte_carlo = mc.mean;
  c.standard_error = mc.se;
  c.deviation = mc.se > 0.0 ? std::abs(closed - mc.mean) / mc.se : (closed == mc.mean ? 0.0 : std::numeric_limits<double>::infinity());
  c.limit = limit;
  return c;
}

// A random smooth 1-D problem on [-2, 2]: G(theta) = a sin(b theta) + c theta, Gaussian noise.
std::shared_ptr<InverseProblem> random_problem(Rng& rng, bool forward_model) {
  auto p = std::make_shared<InverseProblem>();
  p->name = "verify";
  p->prior = Prior::uniform(VectorXd::Constant(1, kLo), VectorXd::Constant(1, kHi));
  const double a = rng.uniform(0.5, 1.5), b = rng.uniform(0.5, 2.0), c = rng.uniform(-0.5, 0.5);
  p->forward_model = [a, b, c](const VectorXd& th) { return VectorXd::Constant(1, a * std::sin(b * th(0)) + c * th(0)); };
  p->observation = VectorXd::Constant(1, rng.uniform(-1.0, 1.0));
  p->noise_cov = MatrixXd::Constant(1, 1, rng.uniform(0.1, 0.5));
  if (forward_model) p->target = ForwardModelTarget{};
  else p->target = LogLikelihoodTarget{};
  return p;
}

// Emulator with random fixed hyperparameters on a random design; noisy half of the time.
SurrogatePosterior random_surrogate(Rng& rng, bool forward_model) {
  auto p = random_problem(rng, forward_model);
  const Index n = 3 + static_cast<Index>(rng.uniform() * 4.0);
  MatrixXd x(n, 1);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(kLo, kHi);
    const VectorXd th = x.row(i).transpose();
    y(i) = forward_model ? p->forward_model(th)(0) : p->log_likelihood(th);
  }
  const double noise = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.01, 0.1);
  if (noise > 0.0) y += std::sqrt(noise) * rng.normal_vector(n);
  const Kernel k = Kernel::squared_exponential(VectorXd::Constant(1, rng.uniform(0.4, 1.2)), rng.uniform(0.2, 1.0));
  return SurrogatePosterior(p, MultiOutputGp({fit_gp(x, y, k, MeanFunction::constant(y.mean()), noise)}));
}

// Responses drawn from the predictive observation law at a batch.
struct BatchLaw {
  VectorXd mean;
  MatrixXd factor;
  VectorXd draw(Rng& rng) const { return mean + factor * rng.normal_vector(mean.size()); }
};

BatchLaw batch_law(const GpEmulator& gp, const MatrixXd& batch) {
  const PredictiveDistribution pd = gp.predict(batch, gp.noise_variance() > 0.0);
  return {pd.mean, psd_factor(pd.cov)};
}

MatrixXd random_batch(Rng& rng) {
  const Index b = rng.uniform() < 0.5 ? 1 : 2;
  MatrixXd batch(b, 1);
  batch(0, 0) = rng.uniform(kLo, kHi);
  if (b == 2) {
    do {
      batch(1, 0) = rng.uniform(kLo, kHi);
    } while (std::abs(batch(1, 0) - batch(0, 0)) < 0.3);
  }
  return batch;
}

using InstanceFn = std::function<std::vector<VerifyCheck>(Index, Rng&)>;

VerifyItem run_item(std::string name, std::string tolerance, Index instances, const Rng& stream, int threads,
                    const InstanceFn& fn) {
  std::vector<std::vector<VerifyCheck>> per(static_cast<std::size_t>(instances));
  parallel_for(
      static_cast<std::size_t>(instances),
      [&](std::size_t i) {
        Rng rng = stream.split(i);
        per[i] = fn(static_cast<Index>(i), rng);
      },
      threads);
  VerifyItem item{std::move(name), std::move(tolerance), {}, true};
  for (auto& v : per) item.checks.insert(item.checks.end(), v.begin(), v.end());
  return item;
}

}  // namespace

bool VerifyItem::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.passed(); });
}

double VerifyItem::worst() const {
  double w = 0.0;
  for (const auto& c : checks) w = std::max(w, c.deviation);
  return w;
}

double VerifyItem::mean_square() const {
  double s = 0.0;
  for (const auto& c : checks) s += c.deviation * c.deviation;
  return checks.empty() ? 0.0 : s / static_cast<double>(checks.size());
}

bool VerifyReport::passed() const {
  return std::all_of(items.begin(), items.end(), [](const VerifyItem& i) { return i.passed(); });
}

VerifyReport run_verification(const VerifyOptions& o) {
  if (o.instances < 1 || o.outer_draws < 2 || o.moment_draws < 2) throw InputError("verify: counts must be positive");
  const Rng root(o.seed);
  const std::string z_tol = "|closed - mc| <= " + std::to_string(o.z_limit).substr(0, 4) + " standard errors";
  VerifyReport report;

  report.items.push_back(run_item(
      "pushforward_moments", z_tol, o.instances, root.split(1), o.threads, [&](Index i, Rng& rng) {
        std::vector<VerifyCheck> out;
        const double lp = -std::log(kHi - kLo);
        {
          const double m = rng.uniform(-2.0, 1.0), s2 = rng.uniform(0.05, 0.5);
          const PushforwardMoments pm = pushforward_moments_ldens(lp, m, s2);
          VectorXd d(o.moment_draws);
          for (Index k = 0; k < d.size(); ++k) d(k) = std::exp(lp + m + std::sqrt(s2) * rng.normal());
          out.push_back(z_check(i, "log_density_mean", pm.mean, mean_se(d), o.z_limit));
          out.push_back(z_check(i, "log_density_variance", pm.variance, variance_se(d), o.z_limit));
        }
        {
          const VectorXd m = VectorXd::Constant(1, rng.uniform(-1.0, 2.0)), s2 = VectorXd::Constant(1, rng.uniform(0.05, 1.0));
          const VectorXd y = VectorXd::Constant(1, rng.uniform(0.0, 1.5));
          const MatrixXd sigma = MatrixXd::Constant(1, 1, rng.uniform(0.05, 0.5));
          const PushforwardMoments pm = pushforward_moments_fwd(lp, m, s2, y, sigma);
          VectorXd d(o.moment_draws);
          for (Index k = 0; k < d.size(); ++k)
            d(k) = std::exp(lp + gaussian_loglik(VectorXd::Constant(1, m(0) + std::sqrt(s2(0)) * rng.normal()), y, sigma));
          out.push_back(z_check(i, "forward_model_mean", pm.mean, mean_se(d), o.z_limit));
          out.push_back(z_check(i, "forward_model_variance", pm.variance, variance_se(d), o.z_limit));
        }
        return out;
      }));

  report.items.push_back(run_item(
      "updated_mean_law", z_tol, o.instances, root.split(2), o.threads, [&](Index i, Rng& rng) {
        const SurrogatePosterior sp = random_surrogate(rng, false);
        const GpEmulator& gp = sp.emulator().output(0);
        const MatrixXd batch = random_batch(rng);
        const VectorXd query = VectorXd::Constant(1, rng.uniform(kLo, kHi));
        const UpdatedMeanLaw law = gp.updated_mean_law(batch, query);
        const BatchLaw bl = batch_law(gp, batch);
        VectorXd d(o.outer_draws);
        for (Index k = 0; k < d.size(); ++k)
          d(k) = gp.update(batch, bl.draw(rng)).predict_marginal(query.transpose()).mean(0);
        return std::vector<VerifyCheck>{z_check(i, "mean", law.mean, mean_se(d), o.z_limit),
                                        z_check(i, "variance", law.variance, variance_se(d), o.z_limit)};
      }));

  report.items.push_back(run_item(
      "ecu_forward_model", z_tol, o.instances, root.split(3), o.threads, [&](Index i, Rng& rng) {
        const SurrogatePosterior sp = random_surrogate(rng, true);
        const GpEmulator& gp = sp.emulator().output(0);
        const InverseProblem& p = sp.problem();
        const RhoMeasure rho = RhoMeasure::prior_samples(p.prior, 16, rng);
        const MatrixXd batch = random_batch(rng);
        const double closed = acq_ecu_var_fwd(sp, batch, rho).value;
        const VectorXd lp = p.prior.log_density_rows(rho.points);
        const BatchLaw bl = batch_law(gp, batch);
        VectorXd d(o.outer_draws);
        for (Index k = 0; k < d.size(); ++k) {
          const MarginalPrediction pr = gp.update(batch, bl.draw(rng)).predict_marginal(rho.points);
          double total = 0.0;
          for (Index j = 0; j < rho.points.rows(); ++j)
            total += rho.weights(j) * pushforward_moments_fwd(lp(j), VectorXd::Constant(1, pr.mean(j)),
                                                              VectorXd::Constant(1, pr.variance(j)), p.observation,
                                                              p.noise_cov)
                                          .variance;
          d(k) = total;
        }
        return std::vector<VerifyCheck>{z_check(i, "integrated_conditional_variance", closed, mean_se(d), o.z_limit)};
      }));

  report.items.push_back(run_item(
      "ecu_log_density", z_tol, o.instances, root.split(4), o.threads, [&](Index i, Rng& rng) {
        const SurrogatePosterior sp = random_surrogate(rng, false);
        const GpEmulator& gp = sp.emulator().output(0);
        const InverseProblem& p = sp.problem();
        const RhoMeasure rho = RhoMeasure::prior_samples(p.prior, 16, rng);
        const MatrixXd batch = random_batch(rng);
        const VectorXd lp = p.prior.log_density_rows(rho.points);
        const WhitenedPoints q = gp.whiten(rho.points);
        const VectorXd after = gp.conditional_variance(gp.whiten(batch), q);
        double closed = 0.0;
        for (Index j = 0; j < lp.size(); ++j)
          closed += rho.weights(j) * std::exp(log_ecu_ldens_node(lp(j), q.mean(j), q.variance(j), after(j), o.tau_power));
        const BatchLaw bl = batch_law(gp, batch);
        VectorXd d(o.outer_draws);
        for (Index k = 0; k < d.size(); ++k) {
          const MarginalPrediction pr = gp.update(batch, bl.draw(rng)).predict_marginal(rho.points);
          double total = 0.0;
          for (Index j = 0; j < rho.points.rows(); ++j)
            total += rho.weights(j) * pushforward_moments_ldens(lp(j), pr.mean(j), pr.variance(j)).variance;
          d(k) = total;
        }
        return std::vector<VerifyCheck>{z_check(i, "integrated_conditional_variance", closed, mean_se(d), o.z_limit)};
      }));

  report.items.push_back(run_item(
      "ep_mixture", "histogram TV(samples, trajectory mixture) <= " + std::to_string(o.ep_tv_limit).substr(0, 4),
      o.instances, root.split(5), o.threads, [&](Index i, Rng& rng) {
        const SurrogatePosterior sp = random_surrogate(rng, false);
        const Grid grid = Grid::uniform(VectorXd::Constant(1, kLo), VectorXd::Constant(1, kHi), 128);
        EpOptions ep;
        ep.trajectories = 256;
        ep.draws = 200;
        ep.grid = grid;
        ep.threads = 1;
        const Rng stream = rng.split(0);
        Rng r1 = stream, r2 = stream;
        const PosteriorEstimate samples = sample_ep(sp, ep, r1);
        const PosteriorEstimate mixture = ep_grid_mixture(sp, grid, ep.trajectories, r2);
        VerifyCheck c;
        c.instance = i;
        c.quantity = "tv";
        c.closed_form = std::numeric_limits<double>::quiet_NaN();
        c.monte_carlo = tv_samples_to_grid(samples.samples, mixture.density, grid, 32);
        c.standard_error = std::numeric_limits<double>::quiet_NaN();
        c.deviation = c.monte_carlo;
        c.limit = o.ep_tv_limit;
        return std::vector<VerifyCheck>{c};
      }));
  report.items.back().z_scored = false;
  return report;
}

nlohmann::json report_to_json(const VerifyReport& report, const VerifyOptions& o) {
  using nlohmann::json;
  auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };
  json items = json::array();
  for (const auto& item : report.items) {
    json checks = json::array();
    for (const auto& c : item.checks)
      checks.push_back({{"instance", c.instance},
                        {"quantity", c.quantity},
                        {"closed_form", num(c.closed_form)},
                        {"monte_carlo", num(c.monte_carlo)},
                        {"standard_error", num(c.standard_error)},
                        {"deviation", num(c.deviation)},
                        {"limit", c.limit},
                        {"passed", c.passed()}});
    Index failures = 0;
    for (const auto& c : item.checks) failures += c.passed() ? 0 : 1;
    items.push_back({{"name", item.name},
                     {"passed", item.passed()},
                     {"tolerance", item.tolerance},
                     {"worst_deviation", num(item.worst())},
                     {"failures", failures},
                     {"mean_square_z", item.z_scored ? num(item.mean_square()) : json(nullptr)},
                     {"checks", checks}});
  }
  return {{"seed", o.seed},
          {"instances", o.instances},
          {"outer_draws", o.outer_draws},
          {"moment_draws", o.moment_draws},
          {"tau_power", o.tau_power},
          {"passed", report.passed()},
          {"items", items}};
}

}  // namespace surro
