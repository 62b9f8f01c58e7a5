#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

#include <Eigen/QR>

#include "surro/cli.hpp"
#include "surro/errors.hpp"
#include "surro/io.hpp"
#include "surro/log.hpp"
#include "surro/parallel.hpp"

namespace surro::cli {

namespace {

using io::json;
using Clock = std::chrono::steady_clock;

constexpr double kZ975 = 1.959963984540054;

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json moments_json(const Moments& m) { return {{"mean", io::vector_to_json(m.mean)}, {"variance", io::vector_to_json(m.variance)}}; }

void write(const ExperimentConfig& c, const std::string& name, const std::string& contents, std::ostream& out) {
  io::write_file(c.output_dir / name, contents);
  out << "wrote " << (c.output_dir / name).string() << "\n";
}

// Wall time lives apart from the other outputs so that they stay byte-reproducible.
void write_timing(const ExperimentConfig& c, const std::string& command, Clock::time_point start, std::ostream& out) {
  const double s = std::chrono::duration<double>(Clock::now() - start).count();
  write(c, "timing.json", io::dump_json({{"command", command}, {"wall_seconds", s}, {"threads", default_threads()}}), out);
}

// Grid over the prior box for estimates and oracles; none above two dimensions.
std::optional<Grid> box_grid(const InverseProblem& p, Index nodes) {
  if (p.dim() > 2) return std::nullopt;
  return Grid::uniform(p.prior.lower(), p.prior.upper(), nodes);
}

std::optional<VectorXd> oracle_on(const InverseProblem& p, const std::optional<Grid>& grid) {
  if (!grid || !p.has_exact_likelihood()) return std::nullopt;
  return grid_posterior_oracle(p, *grid);
}

MatrixXd emulator_responses(const MultiOutputGp& gp) {
  MatrixXd y(gp.size(), gp.outputs());
  for (Index p = 0; p < gp.outputs(); ++p) y.col(p) = gp.output(p).responses();
  return y;
}

HyperparameterOptions effective_hyper(const ExperimentConfig& c) {
  HyperparameterOptions h = c.emulator.hyper;
  h.fit_noise = h.fit_noise || is_noisy(c.problem->target);
  return h;
}

HyperparameterFit fixed_fit(const ExperimentConfig& c, const MatrixXd& x, const VectorXd& y) {
  HyperparameterFit f;
  if (c.emulator.lengthscales->size() != x.cols())
    throw ConfigError("/emulator/lengthscales: needs one entry per parameter");
  f.kernel = Kernel::squared_exponential(*c.emulator.lengthscales, *c.emulator.signal_variance);
  f.noise_variance = c.emulator.hyper.noise_variance;
  switch (c.emulator.hyper.mean_family) {
    case MeanFunction::Family::Zero:
      f.mean = MeanFunction::zero();
      break;
    case MeanFunction::Family::Constant:
      f.mean = MeanFunction::constant(y.mean());
      break;
    case MeanFunction::Family::Affine: {
      MatrixXd a(x.rows(), x.cols() + 1);
      a.col(0).setOnes();
      a.rightCols(x.cols()) = x;
      const VectorXd beta = a.colPivHouseholderQr().solve(y);
      f.mean = MeanFunction::affine(beta(0), beta.tail(x.cols()));
      break;
    }
  }
  return f;
}

MultiOutputGp fit_design(const ExperimentConfig& c, const MatrixXd& x, const MatrixXd& y) {
  if (x.rows() < 2) throw Error("fit: fewer than two usable design points");
  if (!c.emulator.lengthscales) return fit_emulator(x, y, effective_hyper(c));
  std::vector<HyperparameterFit> fits;
  for (Index p = 0; p < y.cols(); ++p) fits.push_back(fixed_fit(c, x, y.col(p)));
  return fit_emulator(x, y, effective_hyper(c), nullptr, &fits);
}

json emulator_document(const ExperimentConfig& c, const MultiOutputGp& gp) {
  json j = io::emulator_to_json(gp);
  j["problem"] = c.problem->name;
  j["target"] = target_name(c.problem->target);
  j["seed"] = c.seed;
  return j;
}

SurrogatePosterior surrogate(const ExperimentConfig& c, const MultiOutputGp& gp) {
  const Index want = emulated_quantity(*c.problem) == EmulatedQuantity::ForwardModel ? c.problem->outputs() : 1;
  if (gp.outputs() != want || gp.dim() != c.problem->dim())
    throw ConfigError("/emulator/snapshot: emulator shape does not match the problem's target");
  return SurrogatePosterior(c.problem, gp, c.estimator.adjustment);
}

PosteriorEstimate run_estimator(const ExperimentConfig& c, const SurrogatePosterior& sp, const std::optional<Grid>& grid) {
  const EstimatorSettings& e = c.estimator;
  const bool fwd = sp.quantity() == EmulatedQuantity::ForwardModel;
  if (fwd && (e.kind == EstimatorKind::Quantile || e.kind == EstimatorKind::Mode))
    throw ConfigError("/estimator/kind: " + estimator_name(e.kind) + " is defined for log-density emulators only");
  if (e.kind == EstimatorKind::GridTruth) {
    if (!grid) throw ConfigError("/estimator/kind: grid_truth needs a problem of at most two dimensions");
    if (!c.problem->has_exact_likelihood()) throw ConfigError("/estimator/kind: problem has no exact likelihood");
    PosteriorEstimate out;
    out.kind = EstimatorKind::GridTruth;
    out.grid = *grid;
    out.density = grid_posterior_oracle(*c.problem, *grid);
    return out;
  }
  if (e.kind == EstimatorKind::Ep) {
    EpOptions ep;
    ep.trajectories = e.trajectories;
    ep.draws = e.draws;
    ep.burn_in = e.burn_in;
    ep.mode = e.ep_mode;
    ep.features = c.emulator.features;
    ep.threads = c.threads;
    if (ep.mode == TrajectoryOptions::Mode::Grid) {
      if (!grid) throw ConfigError("/estimator/ep_mode: grid trajectories need at most two dimensions; use 'features'");
      if (grid->size() > 4096) throw ConfigError("/estimator/grid_nodes: at most 4096 grid nodes for grid trajectories");
      ep.grid = *grid;
    }
    Rng rng = Rng(c.seed).split(5);
    return sample_ep(sp, ep, rng);
  }
  if (e.method == "mcmc" || !grid) return estimate_by_mcmc(sp, e.kind, c.sampler, e.alpha);
  return estimate_on_grid(sp, e.kind, *grid, e.alpha);
}

io::CsvTable pushforward_csv(const SurrogatePosterior& sp, const Grid& grid) {
  auto header = io::theta_columns(grid.dim());
  for (const char* h : {"output", "log_prior", "mean", "variance", "lower", "upper"}) header.push_back(h);
  io::CsvTable t(header);
  const PointwisePrediction pr = sp.predict(grid.points());
  for (Index p = 0; p < pr.mean.cols(); ++p) {
    for (Index i = 0; i < grid.size(); ++i) {
      std::vector<std::string> row;
      for (Index d = 0; d < grid.dim(); ++d) row.push_back(io::format_double(grid.points()(i, d)));
      row.push_back(std::to_string(p));
      const double m = pr.mean(i, p), v = pr.variance(i, p), sd = std::sqrt(std::max(0.0, v));
      for (double x : {pr.log_prior(i), m, v, m - kZ975 * sd, m + kZ975 * sd}) row.push_back(io::format_double(x));
      t.add_row(row);
    }
  }
  return t;
}

// Normalised densities of every estimator on one grid, for overlays.
io::CsvTable overlay_csv(const ExperimentConfig& c, const SurrogatePosterior& sp, const Grid& grid,
                         const std::optional<VectorXd>& truth) {
  std::vector<EstimatorKind> kinds = {EstimatorKind::PlugIn, EstimatorKind::Eup, EstimatorKind::ExpectedLogLik};
  if (sp.quantity() == EmulatedQuantity::LogLikelihood) {
    kinds.push_back(EstimatorKind::Quantile);
    kinds.push_back(EstimatorKind::Mode);
  }
  auto header = io::theta_columns(grid.dim());
  std::vector<VectorXd> cols;
  for (EstimatorKind k : kinds) {
    header.push_back(estimator_name(k));
    VectorXd d;
    try {
      d = estimate_on_grid(sp, k, grid, c.estimator.alpha).density;
    } catch (const DegenerateEstimateError&) {
      d = VectorXd::Constant(grid.size(), std::numeric_limits<double>::quiet_NaN());
    }
    cols.push_back(d);
  }
  Rng rng = Rng(c.seed).split(7);
  header.push_back("ep");
  cols.push_back(ep_grid_mixture(sp, grid, c.estimator.trajectories, rng).density);
  if (truth) {
    header.push_back("grid_truth");
    cols.push_back(*truth);
  }
  io::CsvTable t(header);
  for (Index i = 0; i < grid.size(); ++i) {
    std::vector<double> row;
    for (Index d = 0; d < grid.dim(); ++d) row.push_back(grid.points()(i, d));
    for (const auto& col : cols) row.push_back(col(i));
    t.add_numeric_row(row);
  }
  return t;
}

double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Single-point acquisition over a grid, with the selector surrogate and integration
// measure of each round rebuilt from the same streams the campaign used.
io::CsvTable acquisition_sweep(const ExperimentConfig& c, const DesignHistory& h) {
  const ActiveLearningConfig& a = c.active_learning;
  const InverseProblem& p = *c.problem;
  const Grid grid = Grid::uniform(p.prior.lower(), p.prior.upper(), p.dim() == 1 ? c.sweep_nodes : std::min<Index>(c.sweep_nodes, 64));
  auto header = std::vector<std::string>{"round"};
  for (const auto& col : io::theta_columns(p.dim())) header.push_back(col);
  header.push_back("acq_value");
  io::CsvTable t(header);

  HyperparameterOptions hyper = a.hyper;
  hyper.fit_noise = hyper.fit_noise || is_noisy(p.target);
  std::vector<HyperparameterFit> base;
  for (const auto& g : h.rounds.front().emulator.components())
    base.push_back({g.kernel(), g.mean_function(), g.noise_variance(), 0.0, {}});
  const std::vector<double> schedule = tempering_schedule(a.rounds);
  const Rng root(a.seed);
  Index rows = 0;
  for (Index r = 1; r < static_cast<Index>(h.rounds.size()); ++r) {
    const RoundRecord& prev = h.rounds[static_cast<std::size_t>(r - 1)];
    rows += prev.batch.rows();
    const double beta = a.tempering ? schedule[static_cast<std::size_t>(r)] : 1.0;
    const SurrogatePosterior selector =
        beta == 1.0 ? SurrogatePosterior(c.problem, prev.emulator)
                    : tempered_surrogate(c.problem, h.design.topRows(rows), h.responses.topRows(rows), beta, hyper,
                                         a.reoptimize ? nullptr : &base);
    Rng rng = root.split(3).split(static_cast<std::uint64_t>(r));
    p.prior.sample(a.batch.candidates, rng);
    const RhoMeasure rho = a.acquisition.kind == AcquisitionKind::WeightedIvar
                               ? RhoMeasure::eup_weighted(selector, a.rho_samples, rng)
                               : RhoMeasure::prior_samples(p.prior, a.rho_samples, rng);
    VectorXd values(grid.size());
    parallel_for(
        static_cast<std::size_t>(grid.size()),
        [&](std::size_t i) {
          const MatrixXd x = grid.points().row(static_cast<Index>(i));
          try {
            values(static_cast<Index>(i)) = evaluate_acquisition(a.acquisition.kind, selector, x, rho).value;
          } catch (const DegenerateUpdateError&) {
            values(static_cast<Index>(i)) = std::numeric_limits<double>::quiet_NaN();
          }
        },
        c.threads);
    for (Index i = 0; i < grid.size(); ++i) {
      std::vector<std::string> row = {std::to_string(r)};
      for (Index d = 0; d < grid.dim(); ++d) row.push_back(io::format_double(grid.points()(i, d)));
      row.push_back(io::format_double(values(i)));
      t.add_row(row);
    }
  }
  return t;
}

json history_summary(const ExperimentConfig& c, const DesignHistory& h) {
  const ActiveLearningConfig& a = c.active_learning;
  json tv = json::array(), beta = json::array(), calls = json::array();
  Index dropped = 0;
  for (const auto& r : h.rounds) {
    tv.push_back(num(r.tv_to_oracle));
    beta.push_back(r.beta);
    calls.push_back(r.cumulative_calls);
    dropped += r.dropped;
  }
  return {{"problem", c.problem->name},
          {"target", target_name(c.problem->target)},
          {"seed", c.seed},
          {"acquisition", acquisition_name(a.acquisition.kind)},
          {"strategy", strategy_name(a.batch.strategy)},
          {"metric_estimator", estimator_name(a.estimator)},
          {"initial_design", a.initial_design},
          {"rounds", a.rounds},
          {"batch_size", a.batch_size},
          {"tempering", a.tempering},
          {"design_size", h.design.rows()},
          {"dropped", dropped},
          {"simulator_calls", h.simulator_calls},
          {"final_tv", num(h.final_tv())},
          {"tv_by_round", tv},
          {"beta_by_round", beta},
          {"calls_by_round", calls}};
}

}  // namespace

Design initial_design(const ExperimentConfig& c) {
  const InverseProblem& p = *c.problem;
  const Rng root(c.seed);
  MatrixXd points;
  if (c.emulator.design == "grid") {
    const Index per = std::max<Index>(2, static_cast<Index>(std::lround(std::pow(static_cast<double>(c.emulator.initial_design),
                                                                                     1.0 / static_cast<double>(p.dim())))));
    points = Grid::uniform(p.prior.lower(), p.prior.upper(), per).points();
  } else {
    Rng rng = root.split(1);
    points = p.prior.sample(c.emulator.initial_design, rng);
  }
  const Index outputs = emulated_quantity(p) == EmulatedQuantity::ForwardModel ? p.outputs() : 1;
  const Rng sim = root.split(2).split(0);
  std::vector<std::optional<VectorXd>> values(static_cast<std::size_t>(points.rows()));
  parallel_for(
      values.size(),
      [&](std::size_t i) {
        Rng rng = sim.split(i);
        try {
          const SimObservation obs = simulate(points.row(static_cast<Index>(i)).transpose(), p, rng);
          if (!obs.degenerate && obs.value.allFinite()) values[i] = obs.value;
        } catch (const std::exception& e) {
          logger()->warn("simulation at design point {} failed: {}", i, e.what());
        }
      },
      c.threads);
  Design d;
  Index kept = 0;
  for (const auto& v : values) kept += v ? 1 : 0;
  d.points.resize(kept, p.dim());
  d.responses.resize(kept, outputs);
  Index k = 0;
  for (Index i = 0; i < points.rows(); ++i) {
    const auto& v = values[static_cast<std::size_t>(i)];
    if (!v) continue;
    d.points.row(k) = points.row(i);
    d.responses.row(k++) = v->transpose();
  }
  d.dropped = points.rows() - kept;
  if (d.dropped > 0) logger()->warn("{} design points dropped after failed simulations", d.dropped);
  return d;
}

MultiOutputGp build_emulator(const ExperimentConfig& c) {
  if (c.emulator.snapshot) {
    std::filesystem::path path = *c.emulator.snapshot;
    json j;
    try {
      j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
      throw ConfigError("/emulator/snapshot: " + path.string() + ": " + e.what());
    }
    try {
      return io::emulator_from_json(j);
    } catch (const ConfigError& e) {
      throw ConfigError("/emulator/snapshot: " + path.string() + ": " + e.what());
    }
  }
  const Design d = initial_design(c);
  return fit_design(c, d.points, d.responses);
}

int cmd_fit(const ExperimentConfig& c, std::ostream& out) {
  const auto start = Clock::now();
  const Design d = initial_design(c);
  const MultiOutputGp gp = fit_design(c, d.points, d.responses);
  write(c, "emulator.json", io::dump_json(emulator_document(c, gp)), out);
  write(c, "loo.csv", io::loo_csv(gp).str(), out);
  write(c, "design.csv", io::design_csv(d.points, d.responses).str(), out);
  write_timing(c, "fit", start, out);
  return kSuccess;
}

int cmd_infer(const ExperimentConfig& c, std::ostream& out) {
  const auto start = Clock::now();
  const MultiOutputGp gp = build_emulator(c);
  const SurrogatePosterior sp = surrogate(c, gp);
  const std::optional<Grid> grid = box_grid(*c.problem, c.estimator.grid_nodes);
  const PosteriorEstimate est = run_estimator(c, sp, grid);
  const std::optional<VectorXd> truth = oracle_on(*c.problem, grid);

  json metrics = {{"problem", c.problem->name},
                  {"target", target_name(c.problem->target)},
                  {"estimator", estimator_name(est.kind)},
                  {"representation", est.is_grid() ? "grid" : "samples"},
                  {"rows", est.is_grid() ? est.grid.size() : est.samples.rows()},
                  {"seed", c.seed},
                  {"moments", moments_json(est.moments())}};
  if (est.kind == EstimatorKind::Ep) {
    metrics["trajectories"] = est.trajectories;
    metrics["draws_per_trajectory"] = est.draws_per_trajectory;
  }
  if (truth) {
    const Moments tm = grid_moments(*truth, *grid);
    metrics["oracle_moments"] = moments_json(tm);
    metrics["tv_to_oracle"] = num(tv_to_grid_density(est, *truth, *grid));
    metrics["mean_error"] = num((est.moments().mean - tm.mean).norm());
  }
  if (est.is_grid()) metrics["integral"] = num(est.grid.integrate(est.density));

  write(c, "posterior.csv", io::posterior_csv(est).str(), out);
  write(c, "metrics.json", io::dump_json(metrics), out);
  write(c, "design.csv", io::design_csv(gp.inputs(), emulator_responses(gp)).str(), out);
  if (grid) write(c, "pushforward.csv", pushforward_csv(sp, *grid).str(), out);
  if (grid && grid->dim() == 1) write(c, "estimators.csv", overlay_csv(c, sp, *grid, truth).str(), out);
  write_timing(c, "infer", start, out);
  return kSuccess;
}

int cmd_oracle(const ExperimentConfig& c, std::ostream& out) {
  const auto start = Clock::now();
  const std::optional<Grid> grid = box_grid(*c.problem, c.oracle_nodes);
  if (!grid) throw ConfigError("/problem: the grid oracle needs at most two dimensions");
  if (!c.problem->has_exact_likelihood()) throw ConfigError("/problem: no exact likelihood to tabulate");
  const VectorXd density = grid_posterior_oracle(*c.problem, *grid);
  write(c, "oracle.csv", io::grid_density_csv(*grid, density).str(), out);
  write(c, "oracle.json",
        io::dump_json({{"problem", c.problem->name},
                       {"nodes_per_dim", c.oracle_nodes},
                       {"integral", grid->integrate(density)},
                       {"moments", moments_json(grid_moments(density, *grid))}}),
        out);
  write_timing(c, "oracle", start, out);
  return kSuccess;
}

int cmd_design(const ExperimentConfig& c, std::ostream& out) {
  const auto start = Clock::now();
  const ActiveLearningConfig& a = c.active_learning;
  const DesignHistory h = run_active_learning(c.problem, a);
  json summary = history_summary(c, h);

  write(c, "config.json", io::dump_json(c.source), out);
  write(c, "rounds.csv", io::rounds_csv(h, c.problem->dim()).str(), out);
  write(c, "design.csv", io::design_csv(h.design, h.responses).str(), out);
  for (const auto& r : h.rounds) {
    char name[32];
    std::snprintf(name, sizeof name, "emulators/round_%03ld.json", static_cast<long>(r.round));
    io::write_file(c.output_dir / name, io::dump_json(emulator_document(c, r.emulator)));
  }
  out << "wrote " << h.rounds.size() << " emulator snapshots under " << (c.output_dir / "emulators").string() << "\n";

  if (c.sweep && a.acquisition.is_criterion() && c.problem->dim() <= 2 && !h.rounds.empty())
    write(c, "acquisition.csv", acquisition_sweep(c, h).str(), out);

  if (c.comparison) {
    io::CsvTable table({"seed", "active_tv", "baseline_tv", "active_calls", "baseline_calls"});
    std::vector<double> active, baseline;
    Index better = 0;
    for (Index i = 0; i < c.comparison->seeds; ++i) {
      ActiveLearningConfig ac = a;
      ac.seed = c.seed + static_cast<std::uint64_t>(i);
      ActiveLearningConfig bc = ac;
      if (c.comparison->baseline == "prior_design") {
        bc.initial_design = a.initial_design + a.rounds * a.batch_size;
        bc.rounds = 0;
      } else {
        bc.acquisition.kind = parse_acquisition(c.comparison->baseline);
      }
      const DesignHistory ha = run_active_learning(c.problem, ac);
      const DesignHistory hb = run_active_learning(c.problem, bc);
      active.push_back(ha.final_tv());
      baseline.push_back(hb.final_tv());
      better += ha.final_tv() < hb.final_tv() ? 1 : 0;
      table.add_row({std::to_string(ac.seed), io::format_double(ha.final_tv()), io::format_double(hb.final_tv()),
                     std::to_string(ha.simulator_calls), std::to_string(hb.simulator_calls)});
    }
    write(c, "comparison.csv", table.str(), out);
    summary["comparison"] = {{"baseline", c.comparison->baseline},
                             {"seeds", c.comparison->seeds},
                             {"median_active_tv", num(median(active))},
                             {"median_baseline_tv", num(median(baseline))},
                             {"active_better", better}};
  }
  write(c, "summary.json", io::dump_json(summary), out);
  write_timing(c, "design", start, out);
  return kSuccess;
}

int cmd_verify(const VerifyOptions& options, const std::filesystem::path& output_dir, std::ostream& out) {
  const auto start = Clock::now();
  const VerifyReport report = run_verification(options);
  for (const auto& item : report.items) {
    Index failures = 0;
    for (const auto& ch : item.checks) failures += ch.passed() ? 0 : 1;
    char line[256];
    std::snprintf(line, sizeof line, "%s %-20s checks=%zu failures=%ld worst=%.4g", item.passed() ? "PASS" : "FAIL",
                  item.name.c_str(), item.checks.size(), static_cast<long>(failures), item.worst());
    out << line;
    if (item.z_scored) {
      std::snprintf(line, sizeof line, " mean_z2=%.3f", item.mean_square());
      out << line;
    }
    out << " (" << item.tolerance << ")\n";
  }
  io::write_file(output_dir / "verify.json", io::dump_json(report_to_json(report, options)));
  const double s = std::chrono::duration<double>(Clock::now() - start).count();
  io::write_file(output_dir / "timing.json", io::dump_json({{"command", "verify"}, {"wall_seconds", s}}));
  out << "wrote " << (output_dir / "verify.json").string() << "\n";
  return report.passed() ? kSuccess : kVerificationFailure;
}

double integrate_posterior_csv(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header.back() != "density")
    throw ConfigError(path.string() + ": last column must be 'density'");
  const std::size_t dim = header.size() - 1;
  if (dim < 1 || dim > 2) throw ConfigError(path.string() + ": expected one or two theta columns");
  std::vector<std::vector<double>> rows;
  std::vector<std::map<double, int>> values(dim);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != header.size()) throw ConfigError(path.string() + ": ragged row");
    for (std::size_t d = 0; d < dim; ++d) values[d][row[d]] = 0;
    rows.push_back(row);
  }
  std::vector<VectorXd> axes;
  for (auto& v : values) {
    VectorXd a(static_cast<Index>(v.size()));
    Index k = 0;
    for (auto& [x, idx] : v) {
      idx = static_cast<int>(k);
      a(k++) = x;
    }
    axes.push_back(a);
  }
  const Grid grid = Grid::from_axes(axes);
  if (static_cast<std::size_t>(grid.size()) != rows.size()) throw ConfigError(path.string() + ": not a full tensor grid");
  VectorXd density = VectorXd::Zero(grid.size());
  for (const auto& row : rows) {
    VectorXd x(static_cast<Index>(dim));
    for (std::size_t d = 0; d < dim; ++d) x(static_cast<Index>(d)) = row[d];
    density(grid.nearest_node(x)) = row.back();
  }
  return grid.integrate(density);
}

}  // namespace surro::cli
