#include "surro/config.hpp"

#include <cmath>

#include "surro/errors.hpp"
#include "surro/io.hpp"

namespace surro {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

template <class F>
auto named(const std::string& path, F&& parse) {
  try {
    return parse();
  } catch (const InputError& e) {
    fail(path, e.what());
  }
}

MeanFunction::Family parse_mean(const std::string& name, const std::string& path) {
  if (name == "zero") return MeanFunction::Family::Zero;
  if (name == "constant") return MeanFunction::Family::Constant;
  if (name == "affine") return MeanFunction::Family::Affine;
  fail(path, "unknown mean family '" + name + "'");
}

std::shared_ptr<const InverseProblem> load_problem(const json& j, const std::string& path,
                                                   const std::filesystem::path& base_dir) {
  if (j.is_string()) {
    const std::string name = j.get<std::string>();
    for (const auto& b : builtin_problem_names())
      if (b == name) return builtin_problem(name);
    std::filesystem::path file = name;
    if (file.is_relative()) file = base_dir / file;
    if (!std::filesystem::exists(file)) fail(path, "'" + name + "' is neither a built-in problem nor a file");
    json doc;
    try {
      doc = json::parse(io::read_file(file));
    } catch (const json::parse_error& e) {
      fail(path, file.string() + ": " + e.what());
    }
    return io::problem_from_json(doc, path);
  }
  return io::problem_from_json(j, path);
}

void read_emulator(ConfigSection s, EmulatorSettings& e) {
  e.initial_design = s.integer("initial_design", e.initial_design, 1);
  e.design = s.string("design", e.design);
  if (e.design != "prior" && e.design != "grid") fail(s.path("design"), "expected 'prior' or 'grid'");
  e.hyper.mean_family = parse_mean(s.string("mean", "constant"), s.path("mean"));
  e.hyper.fit_noise = s.boolean("fit_noise", e.hyper.fit_noise);
  e.hyper.noise_variance = s.number("noise_variance", e.hyper.noise_variance);
  if (e.hyper.noise_variance < 0.0) fail(s.path("noise_variance"), "must be nonnegative");
  e.hyper.starts = static_cast<int>(s.integer("starts", e.hyper.starts, 1));
  e.hyper.max_iterations = static_cast<int>(s.integer("max_iterations", e.hyper.max_iterations, 1));
  if (s.has("lengthscales")) e.lengthscales = io::vector_from_json(s.raw("lengthscales"), s.path("lengthscales"));
  e.signal_variance = s.optional_number("signal_variance");
  if (e.lengthscales.has_value() != e.signal_variance.has_value())
    fail(s.path(e.lengthscales ? "signal_variance" : "lengthscales"),
         "lengthscales and signal_variance fix the kernel together");
  if (e.lengthscales && (e.lengthscales->minCoeff() <= 0.0 || *e.signal_variance <= 0.0))
    fail(s.path("lengthscales"), "kernel hyperparameters must be positive");
  e.features = s.integer("features", e.features, 1);
  if (s.has("snapshot")) {
    const json& v = s.raw("snapshot");
    if (!v.is_string()) fail(s.path("snapshot"), "expected a path");
    e.snapshot = v.get<std::string>();
  }
  s.finish();
}

void read_estimator(ConfigSection s, EstimatorSettings& e) {
  e.kind = named(s.path("kind"), [&] { return parse_estimator(s.string("kind", estimator_name(e.kind))); });
  e.alpha = s.number("alpha", e.alpha);
  if (!(e.alpha > 0.0 && e.alpha < 1.0)) fail(s.path("alpha"), "must lie in (0, 1)");
  e.trajectories = s.integer("trajectories", e.trajectories, 1);
  e.draws = s.integer("draws", e.draws, 1);
  e.burn_in = s.number("burn_in", e.burn_in);
  if (!(e.burn_in >= 0.0 && e.burn_in < 1.0)) fail(s.path("burn_in"), "must lie in [0, 1)");
  const std::string mode = s.string("ep_mode", "grid");
  if (mode == "grid") e.ep_mode = TrajectoryOptions::Mode::Grid;
  else if (mode == "features") e.ep_mode = TrajectoryOptions::Mode::Feature;
  else fail(s.path("ep_mode"), "expected 'grid' or 'features'");
  e.method = s.string("method", e.method);
  if (e.method != "grid" && e.method != "mcmc") fail(s.path("method"), "expected 'grid' or 'mcmc'");
  e.grid_nodes = s.integer("grid_nodes", e.grid_nodes, 32);
  e.adjustment.scale = s.number("variance_scale", 1.0);
  if (e.adjustment.scale < 0.0) fail(s.path("variance_scale"), "must be nonnegative");
  e.adjustment.fixed = s.optional_number("fixed_variance");
  if (e.adjustment.fixed && *e.adjustment.fixed < 0.0) fail(s.path("fixed_variance"), "must be nonnegative");
  s.finish();
}

void read_sampler(ConfigSection s, MhConfig& m) {
  m.steps = s.integer("steps", m.steps, 1);
  m.burn_in = s.number("burn_in", m.burn_in);
  if (!(m.burn_in >= 0.0 && m.burn_in < 1.0)) fail(s.path("burn_in"), "must lie in [0, 1)");
  m.adaptation_window = s.integer("adaptation_window", m.adaptation_window, 0);
  m.target_acceptance = s.number("target_acceptance", m.target_acceptance);
  if (s.has("initial_scale")) m.initial_scale = io::vector_from_json(s.raw("initial_scale"), s.path("initial_scale"));
  s.finish();
}

void read_active_learning(ConfigSection s, ExperimentConfig& c) {
  ActiveLearningConfig& a = c.active_learning;
  a.initial_design = s.integer("initial_design", a.initial_design, 3);
  a.rounds = s.integer("rounds", a.rounds, 0);
  a.batch_size = s.integer("batch_size", a.batch_size, 1);
  a.acquisition.kind = named(s.path("acquisition"), [&] {
    return parse_acquisition(s.string("acquisition", acquisition_name(a.acquisition.kind)));
  });
  a.acquisition.mix_weight = s.number("mix_weight", a.acquisition.mix_weight);
  a.batch.strategy = named(s.path("strategy"), [&] { return parse_strategy(s.string("strategy", strategy_name(a.batch.strategy))); });
  a.batch.candidates = s.integer("candidates", a.batch.candidates, 1);
  a.batch.liar = s.optional_number("liar");
  a.rho_samples = s.integer("rho_samples", a.rho_samples, 1);
  a.estimator = named(s.path("estimator"), [&] { return parse_estimator(s.string("estimator", estimator_name(a.estimator))); });
  a.tempering = s.boolean("tempering", a.tempering);
  a.reoptimize = s.boolean("reoptimize", a.reoptimize);
  a.oracle_nodes = s.integer("oracle_nodes", a.oracle_nodes, 32);
  c.sweep = s.boolean("sweep", c.sweep);
  c.sweep_nodes = s.integer("sweep_nodes", c.sweep_nodes, 2);
  if (s.has("comparison")) {
    ConfigSection cs = s.section("comparison");
    ComparisonSettings cmp;
    cmp.baseline = cs.string("baseline", cmp.baseline);
    if (cmp.baseline != "prior_design")
      named(cs.path("baseline"), [&] { return parse_acquisition(cmp.baseline); });
    cmp.seeds = cs.integer("seeds", cmp.seeds, 1);
    cs.finish();
    c.comparison = cmp;
  }
  s.finish();
}

}  // namespace

ConfigSection::ConfigSection(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
  if (!j.is_object()) fail(path_.empty() ? "/" : path_, "expected an object");
}

bool ConfigSection::has(const std::string& key) const { return j_->contains(key) && !(*j_)[key].is_null(); }

const json& ConfigSection::raw(const std::string& key) {
  used_.insert(key);
  const auto it = j_->find(key);
  if (it == j_->end()) fail(path(key), "missing");
  return *it;
}

double ConfigSection::number(const std::string& key, double fallback) {
  used_.insert(key);
  if (!has(key)) return fallback;
  const json& v = (*j_)[key];
  if (!v.is_number()) fail(path(key), "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(path(key), "must be finite");
  return x;
}

Index ConfigSection::integer(const std::string& key, Index fallback, Index min) {
  used_.insert(key);
  if (!has(key)) return fallback;
  const json& v = (*j_)[key];
  if (!v.is_number_integer()) fail(path(key), "expected an integer");
  const Index x = v.get<Index>();
  if (x < min) fail(path(key), "must be at least " + std::to_string(min));
  return x;
}

bool ConfigSection::boolean(const std::string& key, bool fallback) {
  used_.insert(key);
  if (!has(key)) return fallback;
  const json& v = (*j_)[key];
  if (!v.is_boolean()) fail(path(key), "expected true or false");
  return v.get<bool>();
}

std::string ConfigSection::string(const std::string& key, const std::string& fallback) {
  used_.insert(key);
  if (!has(key)) return fallback;
  const json& v = (*j_)[key];
  if (!v.is_string()) fail(path(key), "expected a string");
  return v.get<std::string>();
}

std::optional<double> ConfigSection::optional_number(const std::string& key) {
  if (!has(key)) {
    used_.insert(key);
    return std::nullopt;
  }
  return number(key, 0.0);
}

ConfigSection ConfigSection::section(const std::string& key) {
  used_.insert(key);
  static const json empty = json::object();
  if (!has(key)) return ConfigSection(empty, path(key));
  return ConfigSection((*j_)[key], path(key));
}

void ConfigSection::finish() const {
  for (const auto& [k, v] : j_->items())
    if (!used_.count(k)) fail(path(k), "unknown key");
}

ExperimentConfig parse_config(const json& document, const ConfigOverrides& overrides,
                              const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  ConfigSection root(document, "");
  c.source = document;

  c.problem = load_problem(root.raw("problem"), "/problem", base_dir);

  if (root.has("seed")) {
    const json& s = root.raw("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      fail("/seed", "expected a nonnegative integer");
    c.seed = s.get<std::uint64_t>();
  } else if (!overrides.seed) {
    fail("/seed", "missing (a seed is mandatory)");
  }
  if (overrides.seed) c.seed = *overrides.seed;
  c.source["seed"] = c.seed;

  c.output_dir = root.string("output_dir", c.output_dir.string());
  if (overrides.output_dir) c.output_dir = *overrides.output_dir;

  c.threads = static_cast<int>(root.integer("threads", 0, 0));
  if (overrides.threads) c.threads = *overrides.threads;

  read_emulator(root.section("emulator"), c.emulator);
  read_estimator(root.section("estimator"), c.estimator);
  read_sampler(root.section("sampler"), c.sampler);
  read_active_learning(root.section("active_learning"), c);
  {
    ConfigSection o = root.section("oracle");
    c.oracle_nodes = o.integer("nodes", c.oracle_nodes, 32);
    o.finish();
  }
  root.finish();

  ActiveLearningConfig& a = c.active_learning;
  a.hyper = c.emulator.hyper;
  a.quantile_alpha = c.estimator.alpha;
  a.ep_trajectories = c.estimator.trajectories;
  a.seed = c.seed;
  a.threads = c.threads;
  named("/active_learning", [&] {
    a.acquisition.validate();
    return 0;
  });
  a.validate();
  c.sampler.seed = c.seed;
  named("/sampler", [&] {
    c.sampler.validate(c.problem->dim());
    return 0;
  });
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
  return parse_config(doc, overrides, path.parent_path());
}

}  // namespace surro
