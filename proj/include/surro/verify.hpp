#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "surro/linalg.hpp"

namespace surro {

struct VerifyOptions {
  std::uint64_t seed = 20240611;
  Index instances = 20;
  Index outer_draws = 20000;     // nested Monte Carlo: simulated responses per instance
  Index moment_draws = 200000;   // plain Monte Carlo for pointwise moments
  double z_limit = 3.0;
  double ep_tv_limit = 0.05;
  double tau_power = 1.0;  // test hook: anything but 1 corrupts the log-density ECU reduction factor
  int threads = 0;
};

/// One closed-form value against its Monte Carlo estimate.
struct VerifyCheck {
  Index instance = 0;
  std::string quantity;
  double closed_form = 0.0;
  double monte_carlo = 0.0;
  double standard_error = 0.0;
  double deviation = 0.0;  // |z| against the standard error, or a TV distance
  double limit = 0.0;
  bool passed() const { return deviation <= limit; }
};

struct VerifyItem {
  std::string name;
  std::string tolerance;
  std::vector<VerifyCheck> checks;
  bool z_scored = true;  // deviations are |z|; their mean square should be near 1
  bool passed() const;
  double worst() const;
  double mean_square() const;
};

struct VerifyReport {
  std::vector<VerifyItem> items;
  bool passed() const;
};

/// Random 1-D instances checked against independent Monte Carlo oracles:
/// pushforward moments of both density kinds, the updated-mean law, both expected
/// conditional variances, and EP samples against the trajectory mixture density.
VerifyReport run_verification(const VerifyOptions& options);

nlohmann::json report_to_json(const VerifyReport& report, const VerifyOptions& options);

}  // namespace surro
