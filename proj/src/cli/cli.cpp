#include "surro/cli.hpp"

#include <ostream>

#include <CLI11.hpp>

#include "surro/errors.hpp"
#include "surro/io.hpp"
#include "surro/parallel.hpp"

namespace surro::cli {

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Surrogate-based Bayesian inference: emulation, estimators and active learning", "surro"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int threads = 0;
  bool corrupt_tau = false;
  Index instances = 20;
  std::string check_posterior;

  auto common = [&](CLI::App* sub, bool need_config) {
    auto* opt = sub->add_option("--config", config_path, "experiment JSON");
    if (need_config) opt->required();
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", threads, "worker cap (default: available cores)")->check(CLI::NonNegativeNumber);
  };
  CLI::App* fit = app.add_subcommand("fit", "fit an emulator on the initial design; writes emulator.json, loo.csv");
  CLI::App* infer = app.add_subcommand("infer", "posterior estimate; writes posterior.csv, metrics.json");
  CLI::App* design = app.add_subcommand("design", "active-learning campaign; writes rounds.csv, summary.json");
  CLI::App* oracle = app.add_subcommand("oracle", "grid truth of the exact posterior; writes oracle.csv");
  CLI::App* verify = app.add_subcommand("verify", "Monte Carlo oracle battery; writes verify.json");
  for (CLI::App* s : {fit, infer, design, oracle}) common(s, true);
  common(verify, false);
  verify->add_flag("--corrupt-tau", corrupt_tau, "test hook: drop the variance-reduction exponent of the log-density ECU");
  verify->add_option("--instances", instances, "random instances per item")->check(CLI::PositiveNumber);
  verify->add_option("--check-posterior", check_posterior, "only check that a grid posterior CSV integrates to one");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "surro: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    ConfigOverrides ov;
    if (!app.get_subcommands().front()->get_option("--seed")->empty()) ov.seed = seed;
    if (!out_dir.empty()) ov.output_dir = out_dir;
    if (threads > 0) ov.threads = threads;
    if (threads > 0) set_default_threads(threads);

    if (verify->parsed()) {
      if (!check_posterior.empty()) {
        const double integral = integrate_posterior_csv(check_posterior);
        const bool ok = std::abs(integral - 1.0) <= 1e-6;
        out << (ok ? "PASS" : "FAIL") << " posterior integral " << io::format_double(integral) << " (|I - 1| <= 1e-6)\n";
        return ok ? kSuccess : kVerificationFailure;
      }
      VerifyOptions vo;
      if (ov.seed) vo.seed = *ov.seed;
      vo.instances = instances;
      vo.threads = threads;
      if (corrupt_tau) vo.tau_power = 0.0;
      return cmd_verify(vo, out_dir.empty() ? std::filesystem::path("out") : std::filesystem::path(out_dir), out);
    }

    const ExperimentConfig config = load_config(config_path, ov);
    if (config.threads > 0) set_default_threads(config.threads);
    if (fit->parsed()) return cmd_fit(config, out);
    if (infer->parsed()) return cmd_infer(config, out);
    if (design->parsed()) return cmd_design(config, out);
    return cmd_oracle(config, out);
  } catch (const ConfigError& e) {
    err << "surro: config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "surro: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}

}  // namespace surro::cli
