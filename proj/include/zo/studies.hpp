#pragma once

// Multi-run experiments behind the fig2, verify-bounds and verify-moments
// subcommands and the acceptance suite.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "zo/analysis.hpp"
#include "zo/config.hpp"

namespace zo {

struct CollapseConfig {
  std::vector<std::size_t> dims = {9, 25, 49, 100, 1024};
  std::vector<std::string> optimizers = {"fo-adam", "zo-adam", "meazo"};
  Regime regime = Regime::kHeterogeneous;
  double eta = 1e-4;
  std::size_t q = 10;
  double epsilon = 1e-6;
  double threshold = 1e-3;
  double init_loss = 1.0;
  std::size_t max_steps = 200000;
  /// Steps averaged for the ||grad f||^2 / q target.
  std::size_t tail = 100;
  std::uint64_t seed = 0;
  std::uint64_t objective_seed = 0;
};

struct CollapseRun {
  std::string optimizer;
  std::size_t d = 0;
  std::uint64_t steps = 0;
  bool reached_threshold = false;
  bool diverged = false;
  double final_loss = 0.0;
  /// (max - min) / mean of the terminal bias-corrected v.
  double terminal_spread = 0.0;
  VtStats terminal_stats;
  /// mean over the last `tail` steps of ||grad f||^2 / q.
  double tail_target = 0.0;
  /// max_k |v_k - tail_target| / tail_target.
  double max_target_deviation = 0.0;
};

/// Heterogeneous quadratic per d, each optimizer run from the same x0 until
/// F <= threshold or max_steps.
std::vector<CollapseRun> run_collapse_study(const CollapseConfig& config);
CollapseConfig parse_collapse_config(const nlohmann::json& doc);
nlohmann::json collapse_json(const std::vector<CollapseRun>& runs);

struct BoundCheckConfig {
  std::size_t d = 9;
  std::size_t q = 10;
  double epsilon = 1e-6;
  double sigma = 0.0;
  std::size_t T = 2000;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  double init_loss = 1.0;
  /// Region radius as a multiple of ||x0||.
  double radius_factor = 2.0;
  double zeta = 1.0;
  /// Fractions of the largest admissible eta.
  double meazo_eta_fraction = 1.0;
  double sgd_eta_fraction = 0.5;
  Distribution distribution = Distribution::kUniformSphere;
};

struct BoundCheckResult {
  std::string optimizer;
  double eta = 0.0;
  double beta = 0.0;
  double G = 0.0;
  double radius = 0.0;
  /// Largest ||x_t|| seen on any seed; the region check needs it <= radius.
  double max_iterate_norm = 0.0;
  double observed = 0.0;
  double bound = 0.0;
  bool diverged = false;

  bool holds() const { return !diverged && max_iterate_norm <= radius && observed <= bound; }
};

/// MEAZO with (beta, eta, zeta) solved to satisfy the step-size condition and
/// ZO-SGD below its step-size limit, both on the heterogeneous quadratic.
/// G = (lambda_max R)^2 bounds ||grad F||^2 on the ball of radius R.
std::vector<BoundCheckResult> run_bound_check(const BoundCheckConfig& config);
BoundCheckConfig parse_bound_check_config(const nlohmann::json& doc);
nlohmann::json bound_check_json(const std::vector<BoundCheckResult>& results);

struct MomentCase {
  std::size_t d = 2;
  std::size_t q = 1;
  Distribution distribution = Distribution::kGaussian;
  /// Empty means a random unit vector drawn from `seed`.
  Vector g;
  std::uint64_t seed = 0;
};

struct MomentCheck {
  MomentCase input;
  MomentReport report;
};

/// A unit vector in R^d from the seed.
Vector random_unit_vector(std::size_t d, std::uint64_t seed);

std::vector<MomentCheck> verify_moments(const std::vector<MomentCase>& cases,
                                        std::size_t n_trials);
struct MomentStudyConfig {
  std::vector<MomentCase> cases;
  std::size_t trials = 1000000;
};
MomentStudyConfig parse_moment_config(const nlohmann::json& doc);
nlohmann::json moments_json(const std::vector<MomentCheck>& checks);

}  // namespace zo
