// Acceptance suite: one PASS/FAIL line per primary criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "surro/active_learning.hpp"
#include "surro/cli.hpp"
#include "surro/io.hpp"
#include "surro/verify.hpp"

using namespace surro;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

VectorXd v1(double x) { return VectorXd::Constant(1, x); }

MatrixXd col(const std::vector<double>& v) {
  MatrixXd m(static_cast<Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Index>(i), 0) = v[i];
  return m;
}

Kernel se1(double ell, double sv) { return Kernel::squared_exponential(v1(ell), sv); }

Grid line(double a, double b, Index n) { return Grid::uniform(v1(a), v1(b), n); }

SurrogatePosterior bimodal_ldens(const std::vector<double>& design, const Kernel& k) {
  auto p = builtin_problem("bimodal");
  const MatrixXd x = col(design);
  VectorXd y(x.rows());
  for (Index i = 0; i < x.rows(); ++i) y(i) = p->log_likelihood(x.row(i).transpose());
  return SurrogatePosterior(p, MultiOutputGp({fit_gp(x, y, k, MeanFunction::constant(y.mean()), 0.0)}));
}

Outcome gp_correctness() {
  double interp_mean = 0.0, interp_var = 0.0, update_err = 0.0, dense_err = 0.0, jitter_term = 0.0;
  Rng rng(101);
  for (Index d : {1, 2}) {
    const Index n = 15;
    MatrixXd x(n, d), q(60, d);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < d; ++j) x(i, j) = rng.uniform(-2.0, 2.0);
    for (Index i = 0; i < q.rows(); ++i)
      for (Index j = 0; j < d; ++j) q(i, j) = rng.uniform(-2.5, 2.5);
    VectorXd y(n);
    for (Index i = 0; i < n; ++i) y(i) = std::sin(1.3 * x(i, 0)) + (d == 2 ? 0.5 * x(i, 1) * x(i, 1) : 0.0);
    const Kernel k = Kernel::squared_exponential(VectorXd::Constant(d, 0.5), 1.5);
    const MeanFunction mean = MeanFunction::constant(0.3);
    const GpEmulator gp = fit_gp(x, y, k, mean, 0.0);

    const MarginalPrediction at = gp.predict_marginal(x);
    interp_mean = std::max(interp_mean, (at.mean - y).cwiseAbs().maxCoeff());
    interp_var = std::max(interp_var, at.variance.cwiseAbs().maxCoeff());
    // Exact arithmetic leaves m - y = -jitter * alpha at the design points.
    jitter_term = std::max(jitter_term, gp.jitter() * gp.alpha().cwiseAbs().maxCoeff());

    const Index head = n - 5;
    const GpEmulator updated =
        fit_gp(x.topRows(head), y.head(head), k, mean, 0.0).update(x.bottomRows(5), y.tail(5));
    const MarginalPrediction a = updated.predict_marginal(q), b = gp.predict_marginal(q);
    update_err = std::max({update_err, (a.mean - b.mean).cwiseAbs().maxCoeff(), (a.variance - b.variance).cwiseAbs().maxCoeff()});

    // Dense inverse with the same diagonal the factorisation used.
    MatrixXd kxx = k.matrix(x, x);
    kxx.diagonal().array() += gp.jitter();
    const MatrixXd kinv = kxx.inverse();
    const MatrixXd kqx = k.matrix(q, x);
    const VectorXd m = VectorXd::Constant(q.rows(), 0.3) + kqx * kinv * (y - VectorXd::Constant(n, 0.3));
    const VectorXd v = (k.matrix(q, q).diagonal() - (kqx * kinv * kqx.transpose()).diagonal());
    dense_err = std::max({dense_err, (m - b.mean).cwiseAbs().maxCoeff(), (v - b.variance).cwiseAbs().maxCoeff()});
  }
  const bool ok = interp_mean <= 1e-8 && interp_var <= 1e-8 && update_err <= 1e-8 && dense_err <= 1e-8;
  return {ok, "interp mean " + fmt("%.2e", interp_mean) + " (jitter * max|alpha| " + fmt("%.2e", jitter_term) +
                  "), interp var " + fmt("%.2e", interp_var) +
                  ", update/refit " + fmt("%.2e", update_err) + ", dense inverse " + fmt("%.2e", dense_err) +
                  " (limit 1e-8)"};
}

Outcome verify_battery() {
  const auto start = std::chrono::steady_clock::now();
  const VerifyOptions opt;
  const VerifyReport report = run_verification(opt);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::string detail;
  bool ok = report.passed() && s <= 300.0;
  for (const auto& item : report.items) {
    Index fails = 0;
    for (const auto& c : item.checks) fails += c.passed() ? 0 : 1;
    detail += item.name + " " + std::to_string(item.checks.size() - static_cast<std::size_t>(fails)) + "/" +
              std::to_string(item.checks.size()) + " worst " + fmt("%.3g", item.worst()) + "; ";
  }
  return {ok, detail + "seed " + std::to_string(opt.seed) + ", " + fmt("%.1f s", s)};
}

Outcome estimator_coincidence() {
  const Grid g = line(-2.0, 2.0, 512);
  const SurrogatePosterior base = bimodal_ldens({-1.8, -1.0, -0.2, 0.6, 1.3, 1.9}, se1(0.5, 30.0));
  VarianceAdjustment zero;
  zero.scale = 0.0;
  const SurrogatePosterior sp = base.with_adjustment(zero);
  const VectorXd plug = estimate_plug_in(sp, g).density;
  double worst = 0.0;
  worst = std::max(worst, tv_distance(plug, estimate_eup(sp, g).density, g));
  worst = std::max(worst, tv_distance(plug, estimate_on_grid(sp, EstimatorKind::Mode, g).density, g));
  for (double a : {0.1, 0.3, 0.5, 0.9})
    worst = std::max(worst, tv_distance(plug, estimate_on_grid(sp, EstimatorKind::Quantile, g, a).density, g));
  Rng rng(17);
  worst = std::max(worst, tv_distance(plug, ep_grid_mixture(sp, g, 64, rng).density, g));

  // With emulator variance: the median is the plug-in exactly, EUP is shifted by half the variance.
  const VectorXd median = base.log_density(EstimatorKind::Quantile, g.points(), 0.5);
  const VectorXd lplug = base.log_density(EstimatorKind::PlugIn, g.points());
  const VectorXd leup = base.log_density(EstimatorKind::Eup, g.points());
  const VectorXd s2 = base.predict(g.points()).variance.col(0);
  const bool median_exact = median == lplug;
  const double shift = ((leup - lplug) - 0.5 * s2).cwiseAbs().maxCoeff();
  const bool ok = worst <= 1e-6 && median_exact && shift <= 1e-12;
  return {ok, "max TV at zero variance " + fmt("%.2e", worst) + " (limit 1e-6), median == plug-in " +
                  (median_exact ? "bitwise" : "NO") + ", |EUP - plug-in - s2/2| " + fmt("%.2e", shift)};
}

Outcome ep_fidelity() {
  const auto start = std::chrono::steady_clock::now();
  const SurrogatePosterior sp = bimodal_ldens({-1.9, -1.2, -0.5, 0.4, 1.1, 1.8}, se1(0.45, 25.0));
  const Grid g = line(-2.0, 2.0, 256);
  EpOptions opt;
  opt.trajectories = 512;
  opt.draws = 200;
  opt.grid = g;
  Rng a(11), b(11);
  const PosteriorEstimate ep = sample_ep(sp, opt, a);
  const PosteriorEstimate mix = ep_grid_mixture(sp, g, opt.trajectories, b);
  const double tv = tv_to_grid_density(ep, mix.density, g);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {tv <= 0.05 && s <= 120.0, "TV(EP samples, grid mixture) " + fmt("%.4f", tv) + " (limit 0.05), K=512 M=200, " +
                                        fmt("%.1f s", s)};
}

Outcome fig3_pathology() {
  const SurrogatePosterior sp =
      bimodal_ldens({-2.0, -1.6, -1.2, -1.0, -0.8, -0.4, 0.8, 1.0, 1.2, 1.6, 2.0}, se1(0.35, 100.0));
  const Grid g = line(-2.0, 2.0, 401);
  const PointwisePrediction pred = sp.predict(g.points());
  Index hole = 0;
  (pred.mean.col(0) + 0.5 * pred.variance.col(0)).maxCoeff(&hole);
  Index eup_mode = 0;
  const VectorXd eup = estimate_eup(sp, g).density;
  eup.maxCoeff(&eup_mode);
  Rng rng(7);
  const VectorXd ep = ep_grid_mixture(sp, g, 256, rng).density;
  const int peaks = count_peaks(ep, 0.1);
  const double lo = ep(g.nearest_node(v1(-1.0))) / ep.maxCoeff(), hi = ep(g.nearest_node(v1(1.0))) / ep.maxCoeff();
  // Mass of the EUP within 0.2 of its mode: near one for a point mass.
  double near = 0.0;
  for (Index i = 0; i < g.size(); ++i)
    if (std::abs(g.points()(i, 0) - g.points()(eup_mode, 0)) <= 0.2) near += g.weights()(i) * eup(i);
  const bool in_hole = g.points()(hole, 0) > -0.4 && g.points()(hole, 0) < 0.8;
  const bool ok = eup_mode == hole && in_hole && peaks >= 2 && lo >= 0.1 && hi >= 0.1;
  return {ok, "EUP mode " + fmt("%.3f", g.points()(eup_mode, 0)) + " vs argmax m+s2/2 " + fmt("%.3f", g.points()(hole, 0)) +
                  " (EUP mass within 0.2: " + fmt("%.3f", near) + "), EP peaks above 10%: " + std::to_string(peaks) +
                  ", EP at -1/+1: " + fmt("%.2f", lo) + "/" + fmt("%.2f", hi) + " of max"};
}

Outcome prior_reversion() {
  auto p = std::make_shared<InverseProblem>(*builtin_problem("bimodal"));
  p->target = ForwardModelTarget{};
  const MatrixXd x = col({-1.5, 0.0, 1.5});
  VectorXd y(3);
  for (Index i = 0; i < 3; ++i) y(i) = p->forward_model(x.row(i).transpose())(0);
  VarianceAdjustment huge;
  huge.fixed = 1e6 * p->noise_cov.norm();
  const SurrogatePosterior sp(p, MultiOutputGp({fit_gp(x, y, se1(0.8, 2.0), MeanFunction::constant(y.mean()), 0.0)}), huge);
  const Grid g = line(-2.0, 2.0, 512);
  const VectorXd prior = normalize_on_grid(p->prior.log_density_rows(g.points()), g);
  const double tv = tv_distance(estimate_eup(sp, g).density, prior, g);
  const double plug = tv_distance(estimate_plug_in(sp, g).density, prior, g);
  return {tv <= 0.02, "TV(EUP, prior) " + fmt("%.2e", tv) + " (limit 0.02); plug-in stays at " + fmt("%.3f", plug)};
}

Outcome pseudo_marginal() {
  auto p = builtin_problem("latent");
  // Prior N(0, 1), y | theta ~ N(theta, 2): posterior mean y / 3.
  const double truth = p->observation(0) / 3.0;
  const auto est = [q = *p](const VectorXd& x, Rng& rng) { return pseudo_marginal_loglik_estimate(x, q, rng).value(0); };
  VectorXd means(10);
  int within = 0;
  for (int s = 0; s < 10; ++s) {
    MhConfig cfg;
    cfg.steps = 400000;
    cfg.seed = 9000 + static_cast<std::uint64_t>(s);
    const VectorXd r = pm_mh(est, p->prior, cfg).retained().col(0);
    means(s) = r.mean();
    const double se = std::sqrt((r.array() - r.mean()).square().mean() / effective_sample_size(r));
    within += std::abs(r.mean() - truth) <= 3.0 * se ? 1 : 0;
  }
  const double pooled = means.mean();
  const double se = std::sqrt((means.array() - pooled).square().sum() / 9.0 / 10.0);
  const double z = std::abs(pooled - truth) / se;
  return {z <= 3.0, "pooled mean " + fmt("%.5f", pooled) + " vs " + fmt("%.5f", truth) + ", |z| " + fmt("%.2f", z) +
                        " over 10 chains of 4e5 steps (M=10); " + std::to_string(within) + "/10 chains within 3 ESS-SE"};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

Outcome active_beats_prior() {
  const auto start = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;
  for (const char* name : {"conjugate", "bimodal"}) {
    auto p = builtin_problem(name);
    std::vector<double> active, prior;
    for (int s = 0; s < 10; ++s) {
      ActiveLearningConfig a;
      a.initial_design = 4;
      a.rounds = 5;
      a.batch_size = 2;
      a.acquisition.kind = AcquisitionKind::EcuVarLdens;
      a.seed = 500 + static_cast<std::uint64_t>(s);
      ActiveLearningConfig b = a;
      b.initial_design = 14;
      b.rounds = 0;
      active.push_back(run_active_learning(p, a).final_tv());
      prior.push_back(run_active_learning(p, b).final_tv());
    }
    const double ma = median(active), mp = median(prior);
    ok = ok && ma < mp;
    detail += std::string(name) + " median TV " + fmt("%.2e", ma) + " vs prior design " + fmt("%.2e", mp) + "; ";
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {ok && s <= 600.0, detail + "10 paired seeds, " + fmt("%.1f s", s)};
}

Outcome tempering_endpoint() {
  bool ok = true;
  std::string detail;
  for (bool forward : {false, true}) {
    auto p = std::make_shared<InverseProblem>(*builtin_problem("conjugate"));
    if (forward) p->target = ForwardModelTarget{};
    ActiveLearningConfig cfg;
    cfg.rounds = 4;
    cfg.batch_size = 2;
    cfg.acquisition.kind = forward ? AcquisitionKind::EcuVarFwd : AcquisitionKind::EcuVarLdens;
    cfg.tempering = true;
    cfg.seed = 77;
    const DesignHistory h = run_active_learning(p, cfg);
    const Index before = h.design.rows() - h.rounds.back().batch.rows();
    const MatrixXd x = h.design.topRows(before), y = h.responses.topRows(before);
    const double beta_T = tempering_schedule(cfg.rounds).back();
    const SurrogatePosterior tempered = tempered_surrogate(p, x, y, beta_T, cfg.hyper);
    const SurrogatePosterior plain = tempered_surrogate(p, x, y, 1.0, cfg.hyper);
    const Grid g = line(-5.0, 5.0, 201);
    const bool same = h.rounds.back().beta == 1.0 &&
                      tempered.log_density(EstimatorKind::PlugIn, g.points()) == plain.log_density(EstimatorKind::PlugIn, g.points()) &&
                      tempered.log_density(EstimatorKind::Eup, g.points()) == plain.log_density(EstimatorKind::Eup, g.points());
    // Intermediate rounds: the rescaled target is beta log L (responses) or noise / beta (forward model).
    const double beta = tempering_schedule(cfg.rounds)[2];
    const SurrogatePosterior mid = tempered_surrogate(p, x, y, beta, cfg.hyper);
    const bool rescaled = forward ? mid.problem().noise_cov == p->noise_cov / beta
                                  : mid.emulator().output(0).responses() == beta * y.col(0);
    ok = ok && same && rescaled;
    detail += std::string(forward ? "forward model" : "log-likelihood") + ": final target " +
              (same ? "bitwise equal" : "DIFFERS") + ", rescaling " + (rescaled ? "exact" : "WRONG") + "; ";
  }
  return {ok, detail};
}

std::map<std::string, std::string> outputs(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "timing.json")
      files[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  return files;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "surro_acceptance_cli";
  fs::remove_all(root);
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"fit", R"({"problem": "conjugate", "seed": 3, "emulator": {"initial_design": 8}})"},
      {"infer", R"({"problem": "bimodal", "seed": 3, "estimator": {"kind": "eup"}})"},
      {"infer", R"({"problem": "bimodal", "seed": 3, "estimator": {"kind": "ep", "trajectories": 16, "draws": 100}})"},
      {"infer", R"({"problem": "ode", "seed": 3, "emulator": {"initial_design": 16}, "estimator": {"kind": "plug_in", "grid_nodes": 48}})"},
      {"design", R"({"problem": "bimodal", "seed": 3, "active_learning": {"rounds": 3, "sweep": true}})"},
      {"design", R"({"problem": {"builtin": "conjugate", "target": {"kind": "synthetic_likelihood", "replicates": 20}},
                    "seed": 3, "active_learning": {"rounds": 2, "acquisition": "posterior_sample", "tempering": true}})"},
      {"oracle", R"({"problem": "bimodal", "seed": 3})"},
      {"verify", ""}};
  Index identical = 0;
  std::string failed;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const fs::path dir = root / std::to_string(i);
    fs::create_directories(dir);
    std::vector<std::string> base = {runs[i].first};
    if (runs[i].first == "verify") {
      base.insert(base.end(), {"--instances", "2"});
    } else {
      io::write_file(dir / "config.json.in", runs[i].second);
      base.insert(base.end(), {"--config", (dir / "config.json.in").string()});
    }
    std::ostringstream sink;
    bool same = true;
    for (const char* rep : {"a", "b"}) {
      std::vector<std::string> args = base;
      args.insert(args.end(), {"--out", (dir / rep).string()});
      const int code = cli::run(args, sink, sink);
      same = same && (code == 0 || (runs[i].first == "verify" && code == 3));
    }
    same = same && outputs(dir / "a") == outputs(dir / "b");
    if (same) ++identical;
    else failed += " " + runs[i].first + "#" + std::to_string(i);
  }
  fs::remove_all(root);
  return {identical == static_cast<Index>(runs.size()),
          std::to_string(identical) + "/" + std::to_string(runs.size()) +
              " command runs byte-identical on rerun (timing.json excluded)" + (failed.empty() ? "" : "; differ:" + failed)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gp_correctness", gp_correctness},
      {"verification_battery", verify_battery},
      {"estimator_coincidence", estimator_coincidence},
      {"ep_fidelity", ep_fidelity},
      {"eup_hole_vs_ep_bimodality", fig3_pathology},
      {"prior_reversion", prior_reversion},
      {"pseudo_marginal_exactness", pseudo_marginal},
      {"active_learning_beats_prior_design", active_beats_prior},
      {"tempering_endpoint", tempering_endpoint},
      {"cli_determinism", cli_determinism},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.passed ? 0 : 1;
    std::printf("%s %s: %s\n", o.passed ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
