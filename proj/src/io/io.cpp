#include "surro/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Cholesky>

#include "surro/errors.hpp"

namespace surro::io {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

const json& member(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) fail(path + "/" + key, "missing");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

Index integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<Index>();
}

void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& path) {
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) fail(path + "/" + k, "unknown key");
  }
}

GpEmulator gp_from_json(const json& j, const std::string& path) {
  const MatrixXd x = matrix_from_json(member(j, "inputs", path), path + "/inputs");
  const VectorXd y = vector_from_json(member(j, "responses", path), path + "/responses");
  const json& k = member(j, "kernel", path);
  Kernel kernel = Kernel::squared_exponential(vector_from_json(member(k, "lengthscales", path + "/kernel"),
                                                               path + "/kernel/lengthscales"),
                                              number(member(k, "signal_variance", path + "/kernel"),
                                                     path + "/kernel/signal_variance"));
  if (k.contains("jitter")) kernel.jitter = number(k["jitter"], path + "/kernel/jitter");
  const json& m = member(j, "mean", path);
  const std::string family = member(m, "family", path + "/mean").get<std::string>();
  MeanFunction mean;
  if (family == "zero") {
    mean = MeanFunction::zero();
  } else if (family == "constant") {
    mean = MeanFunction::constant(number(member(m, "offset", path + "/mean"), path + "/mean/offset"));
  } else if (family == "affine") {
    mean = MeanFunction::affine(number(member(m, "offset", path + "/mean"), path + "/mean/offset"),
                                vector_from_json(member(m, "slope", path + "/mean"), path + "/mean/slope"));
  } else {
    fail(path + "/mean/family", "unknown mean family '" + family + "'");
  }
  return fit_gp(x, y, kernel, mean, number(member(j, "noise_variance", path), path + "/noise_variance"));
}

std::string family_name(MeanFunction::Family f) {
  switch (f) {
    case MeanFunction::Family::Zero:
      return "zero";
    case MeanFunction::Family::Constant:
      return "constant";
    case MeanFunction::Family::Affine:
      return "affine";
  }
  return "zero";
}

// Replicate draws y = G(theta) + e, e ~ N(0, Sigma).
Simulator gaussian_simulator(ForwardModel g, const MatrixXd& noise_cov) {
  const MatrixXd l = Eigen::LLT<MatrixXd>(noise_cov).matrixL();
  return [g = std::move(g), l](const VectorXd& theta, Rng& rng) -> VectorXd {
    return g(theta) + l * rng.normal_vector(l.rows());
  };
}

void apply_target(InverseProblem& p, const json& t, const std::string& path) {
  only_keys(t, {"kind", "replicates", "epsilon"}, path);
  const std::string kind = member(t, "kind", path).get<std::string>();
  if (kind == "forward_model") {
    if (!p.forward_model) fail(path + "/kind", "problem has no forward model");
    p.target = ForwardModelTarget{};
  } else if (kind == "log_likelihood") {
    p.target = LogLikelihoodTarget{};
  } else if (kind == "synthetic_likelihood" || kind == "abc") {
    if (!p.forward_model) fail(path + "/kind", "simulation targets need a forward model");
    const Index m = integer(member(t, "replicates", path), path + "/replicates");
    if (kind == "synthetic_likelihood") {
      SyntheticLikelihoodTarget sl;
      sl.replicates = m;
      sl.simulator = gaussian_simulator(p.forward_model, p.noise_cov);
      p.target = sl;
    } else {
      AbcTarget abc;
      abc.replicates = m;
      abc.epsilon = number(member(t, "epsilon", path), path + "/epsilon");
      abc.simulator = gaussian_simulator(p.forward_model, p.noise_cov);
      p.target = abc;
    }
  } else if (kind == "pseudo_marginal") {
    if (!std::holds_alternative<PseudoMarginalTarget>(p.target))
      fail(path + "/kind", "pseudo-marginal targets are only available on the built-in latent problem");
    if (t.contains("replicates"))
      std::get<PseudoMarginalTarget>(p.target).replicates = integer(t["replicates"], path + "/replicates");
  } else {
    fail(path + "/kind", "unknown target kind '" + kind + "'");
  }
}

ForwardModel forward_model_from_json(const json& f, Index dim, const std::string& path) {
  const std::string type = member(f, "type", path).get<std::string>();
  if (type == "linear") {
    only_keys(f, {"type", "matrix", "offset"}, path);
    const MatrixXd a = matrix_from_json(member(f, "matrix", path), path + "/matrix");
    if (a.cols() != dim) fail(path + "/matrix", "needs one column per parameter");
    const VectorXd b = f.contains("offset") ? vector_from_json(f["offset"], path + "/offset") : VectorXd::Zero(a.rows());
    if (b.size() != a.rows()) fail(path + "/offset", "needs one entry per output");
    return [a, b](const VectorXd& th) -> VectorXd { return a * th + b; };
  }
  if (type == "power") {
    only_keys(f, {"type", "exponent"}, path);
    const double e = number(member(f, "exponent", path), path + "/exponent");
    return [e](const VectorXd& th) -> VectorXd { return th.array().pow(e).matrix(); };
  }
  if (type == "decay_ode") {
    // dx/dt = -theta_0 x + theta_1, window-averaged.
    only_keys(f, {"type", "t1", "steps", "windows", "initial_state"}, path);
    if (dim != 2) fail(path, "decay_ode needs two parameters");
    OdeSpec spec;
    spec.rhs = [](double, const VectorXd& x, const VectorXd& th) { return (-th(0) * x.array() + th(1)).matrix().eval(); };
    spec.initial_state = VectorXd::Constant(1, f.contains("initial_state") ? number(f["initial_state"], path + "/initial_state") : 1.0);
    spec.t1 = f.contains("t1") ? number(f["t1"], path + "/t1") : 12.0;
    spec.steps = f.contains("steps") ? integer(f["steps"], path + "/steps") : 200;
    ObservationOperator obs;
    obs.kind = ObservationOperator::Kind::WindowAverage;
    obs.windows = f.contains("windows") ? integer(f["windows"], path + "/windows") : 12;
    return [spec, obs](const VectorXd& th) { return ode_forward_model(th, spec, obs); };
  }
  fail(path + "/type", "unknown forward model '" + type + "'");
}

Prior prior_from_json(const json& j, const std::string& path) {
  const std::string type = member(j, "type", path).get<std::string>();
  const VectorXd lo = vector_from_json(member(j, "lower", path), path + "/lower");
  const VectorXd hi = vector_from_json(member(j, "upper", path), path + "/upper");
  try {
    if (type == "uniform") {
      only_keys(j, {"type", "lower", "upper"}, path);
      return Prior::uniform(lo, hi);
    }
    if (type == "truncated_gaussian") {
      only_keys(j, {"type", "lower", "upper", "mean", "sd"}, path);
      return Prior::truncated_gaussian(vector_from_json(member(j, "mean", path), path + "/mean"),
                                       vector_from_json(member(j, "sd", path), path + "/sd"), lo, hi);
    }
  } catch (const InputError& e) {
    fail(path, e.what());
  }
  fail(path + "/type", "unknown prior type '" + type + "'");
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

MatrixXd matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of rows");
  const Index rows = static_cast<Index>(j.size());
  if (!j[0].is_array() || j[0].empty()) fail(path + "/0", "expected a non-empty array");
  const Index cols = static_cast<Index>(j[0].size());
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    const std::string rp = path + "/" + std::to_string(i);
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) fail(rp, "rows must have equal length");
    for (Index c = 0; c < cols; ++c) m(i, c) = number(row[static_cast<std::size_t>(c)], rp + "/" + std::to_string(c));
  }
  return m;
}

VectorXd vector_from_json(const json& j, const std::string& path) {
  if (j.is_number()) return VectorXd::Constant(1, j.get<double>());
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of numbers");
  VectorXd v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = number(j[static_cast<std::size_t>(i)], path + "/" + std::to_string(i));
  return v;
}

json emulator_to_json(const MultiOutputGp& gp) {
  json outputs = json::array();
  for (const auto& g : gp.components()) {
    json m = {{"family", family_name(g.mean_function().family)}, {"offset", g.mean_function().offset}};
    if (g.mean_function().family == MeanFunction::Family::Affine) m["slope"] = vector_to_json(g.mean_function().slope);
    outputs.push_back({{"kernel",
                        {{"family", "squared_exponential"},
                         {"lengthscales", vector_to_json(g.kernel().lengthscales)},
                         {"signal_variance", g.kernel().signal_variance},
                         {"jitter", g.kernel().jitter}}},
                       {"mean", m},
                       {"noise_variance", g.noise_variance()},
                       {"applied_jitter", g.jitter()},
                       {"log_marginal_likelihood", g.log_marginal_likelihood()},
                       {"inputs", matrix_to_json(g.inputs())},
                       {"responses", vector_to_json(g.responses())}});
  }
  return {{"outputs", outputs}};
}

MultiOutputGp emulator_from_json(const json& j) {
  const json& outputs = member(j, "outputs", "");
  if (!outputs.is_array() || outputs.empty()) fail("/outputs", "expected a non-empty array");
  std::vector<GpEmulator> gps;
  for (std::size_t i = 0; i < outputs.size(); ++i) gps.push_back(gp_from_json(outputs[i], "/outputs/" + std::to_string(i)));
  return MultiOutputGp(std::move(gps));
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << contents;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size()) throw InputError("csv: row width does not match the header");
  rows_.push_back(cells);
}

void CsvTable::add_numeric_row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_double(v));
  add_row(cells);
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

std::vector<std::string> theta_columns(Index dim) {
  std::vector<std::string> out;
  for (Index d = 0; d < dim; ++d) out.push_back("theta_" + std::to_string(d));
  return out;
}

CsvTable grid_density_csv(const Grid& grid, const VectorXd& density) {
  auto header = theta_columns(grid.dim());
  header.push_back("density");
  CsvTable t(header);
  for (Index i = 0; i < grid.size(); ++i) {
    std::vector<double> row;
    for (Index d = 0; d < grid.dim(); ++d) row.push_back(grid.points()(i, d));
    row.push_back(density(i));
    t.add_numeric_row(row);
  }
  return t;
}

CsvTable samples_csv(const PosteriorEstimate& estimate) {
  std::vector<std::string> header = {"draw", "trajectory"};
  for (const auto& c : theta_columns(estimate.samples.cols())) header.push_back(c);
  CsvTable t(header);
  for (Index i = 0; i < estimate.samples.rows(); ++i) {
    std::vector<std::string> row = {std::to_string(i),
                                    std::to_string(static_cast<std::size_t>(i) < estimate.trajectory.size()
                                                       ? estimate.trajectory[static_cast<std::size_t>(i)]
                                                       : 0)};
    for (Index d = 0; d < estimate.samples.cols(); ++d) row.push_back(format_double(estimate.samples(i, d)));
    t.add_row(row);
  }
  return t;
}

CsvTable posterior_csv(const PosteriorEstimate& estimate) {
  return estimate.is_grid() ? grid_density_csv(estimate.grid, estimate.density) : samples_csv(estimate);
}

CsvTable rounds_csv(const DesignHistory& history, Index dim) {
  std::vector<std::string> header = {"round", "point_idx"};
  for (const auto& c : theta_columns(dim)) header.push_back(c);
  for (const char* c : {"acq_value", "tv_to_oracle", "cumulative_calls"}) header.push_back(c);
  CsvTable t(header);
  for (const auto& r : history.rounds) {
    if (r.round == 0) continue;
    for (Index i = 0; i < r.batch.rows(); ++i) {
      std::vector<std::string> row = {std::to_string(r.round), std::to_string(i)};
      for (Index d = 0; d < dim; ++d) row.push_back(format_double(r.batch(i, d)));
      row.push_back(format_double(r.acquisition(i)));
      row.push_back(format_double(r.tv_to_oracle));
      row.push_back(std::to_string(r.cumulative_calls));
      t.add_row(row);
    }
  }
  return t;
}

CsvTable loo_csv(const MultiOutputGp& gp) {
  std::vector<std::string> header = {"output", "point"};
  for (const auto& c : theta_columns(gp.dim())) header.push_back(c);
  for (const char* c : {"response", "loo_mean", "loo_variance", "standardized_residual", "log_score"})
    header.push_back(c);
  CsvTable t(header);
  for (Index p = 0; p < gp.outputs(); ++p) {
    const GpEmulator& g = gp.output(p);
    const auto loo = loo_diagnostics(g);
    for (Index i = 0; i < g.size(); ++i) {
      const LooRecord& r = loo[static_cast<std::size_t>(i)];
      std::vector<std::string> row = {std::to_string(p), std::to_string(i)};
      for (Index d = 0; d < g.dim(); ++d) row.push_back(format_double(g.inputs()(i, d)));
      for (double v : {g.responses()(i), r.mean, r.variance, r.standardized_residual, r.log_score})
        row.push_back(format_double(v));
      t.add_row(row);
    }
  }
  return t;
}

CsvTable design_csv(const MatrixXd& x, const MatrixXd& y) {
  std::vector<std::string> header = {"point"};
  for (const auto& c : theta_columns(x.cols())) header.push_back(c);
  for (Index p = 0; p < y.cols(); ++p) header.push_back("response_" + std::to_string(p));
  CsvTable t(header);
  for (Index i = 0; i < x.rows(); ++i) {
    std::vector<std::string> row = {std::to_string(i)};
    for (Index d = 0; d < x.cols(); ++d) row.push_back(format_double(x(i, d)));
    for (Index p = 0; p < y.cols(); ++p) row.push_back(format_double(y(i, p)));
    t.add_row(row);
  }
  return t;
}

std::shared_ptr<const InverseProblem> problem_from_json(const json& j, const std::string& path) {
  std::shared_ptr<InverseProblem> p;
  try {
    if (j.is_string()) return builtin_problem(j.get<std::string>());
    if (!j.is_object()) fail(path, "expected a built-in name or an object");
    if (j.contains("builtin")) {
      only_keys(j, {"builtin", "target"}, path);
      if (!j["builtin"].is_string()) fail(path + "/builtin", "expected a string");
      try {
        p = std::make_shared<InverseProblem>(*builtin_problem(j["builtin"].get<std::string>()));
      } catch (const InputError& e) {
        fail(path + "/builtin", e.what());
      }
      if (j.contains("target")) apply_target(*p, j["target"], path + "/target");
    } else {
      only_keys(j, {"name", "prior", "observation", "noise_cov", "noise_sd", "forward_model", "target"}, path);
      p = std::make_shared<InverseProblem>();
      p->name = j.contains("name") ? j["name"].get<std::string>() : "custom";
      p->prior = prior_from_json(member(j, "prior", path), path + "/prior");
      p->observation = vector_from_json(member(j, "observation", path), path + "/observation");
      if (j.contains("noise_cov")) {
        p->noise_cov = matrix_from_json(j["noise_cov"], path + "/noise_cov");
      } else {
        VectorXd sd = vector_from_json(member(j, "noise_sd", path), path + "/noise_sd");
        if (j["noise_sd"].is_number()) sd = VectorXd::Constant(p->observation.size(), sd(0));
        p->noise_cov = sd.array().square().matrix().asDiagonal();
      }
      p->forward_model = forward_model_from_json(member(j, "forward_model", path), p->prior.dim(), path + "/forward_model");
      if (j.contains("target")) apply_target(*p, j["target"], path + "/target");
    }
    p->validate();
    if (p->forward_model) {
      const VectorXd g = p->forward_model(p->prior.mode());
      if (g.size() != p->outputs()) fail(path + "/observation", "length does not match the forward model output");
    }
  } catch (const json::exception& e) {
    fail(path, e.what());
  } catch (const InputError& e) {
    fail(path, e.what());
  }
  return p;
}

}  // namespace surro::io
