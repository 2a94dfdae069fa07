#pragma once

// Two-stage step-size search: a fixed coarse grid, then every integer-mantissa
// value strictly between the coarse winner and its two neighbours.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "zo/config.hpp"
#include "zo/harness.hpp"

namespace zo {

/// eta = mantissa * 10^exponent with mantissa in 1..9. Kept symbolic so grid
/// membership and ordering are exact.
struct StepSize {
  int mantissa = 1;
  int exponent = 0;

  double value() const;
  auto operator<=>(const StepSize& other) const;
  bool operator==(const StepSize& other) const = default;
};

inline auto StepSize::operator<=>(const StepSize& other) const {
  const int common = std::min(exponent, other.exponent);
  long long a = mantissa;
  long long b = other.mantissa;
  for (int k = common; k < exponent; ++k) a *= 10;
  for (int k = common; k < other.exponent; ++k) b *= 10;
  return a <=> b;
}

/// {1e-6, 5e-6, 1e-5, 5e-5, ..., 5e-2, 1e-1}.
std::vector<StepSize> coarse_grid();

/// Next/previous coarse-grid values, including the virtual neighbours.
StepSize coarse_successor(const StepSize& eta);
StepSize coarse_predecessor(const StepSize& eta);

/// m * 10^k with m in 1..9 strictly inside (lower, upper), ascending.
std::vector<StepSize> fine_candidates(const StepSize& lower, const StepSize& upper);

struct Bracket {
  StepSize lower;
  StepSize winner;
  StepSize upper;
};

/// The fine stage grid: candidates below the winner, the winner, candidates above.
std::vector<StepSize> fine_grid(const Bracket& bracket);

struct GridPoint {
  StepSize eta;
  /// 1 = coarse, 2 = fine.
  int stage = 1;
  double mean_metric = 0.0;
  double std_metric = 0.0;
  double mean_best = 0.0;
  double mean_final = 0.0;
  std::size_t diverged_seeds = 0;
  std::vector<double> per_seed_final;
  std::vector<double> per_seed_best;
  std::vector<std::optional<std::uint64_t>> per_seed_steps_to_threshold;
};

struct SweepResult {
  /// Every evaluated step size, ascending, each once.
  std::vector<GridPoint> grid;
  /// Unset when every grid point diverged on every seed.
  std::optional<StepSize> best_eta;
  std::optional<Bracket> bracket;
  bool all_diverged = false;
  SweepMetric metric = SweepMetric::kFinal;
  double sentinel = 0.0;

  const GridPoint* find(const StepSize& eta) const;
  const GridPoint& best() const;
};

/// Caps a metric: non-finite or diverged values become the sentinel.
double capped_metric(double value, bool diverged, double sentinel);

/// Runs the coarse grid and the fine bracket around its winner over all seeds.
/// Lowest mean metric wins; ties go to the smaller step size.
SweepResult coarse_fine_sweep(const ExperimentConfig& base, SweepMetric metric);

/// Same selection rule over an arbitrary list of step sizes (single stage).
SweepResult grid_sweep(const ExperimentConfig& base, SweepMetric metric,
                       std::span<const StepSize> etas);

/// Index of the argmin mean metric with the smaller-eta tie-break.
std::size_t argmin_metric(std::span<const GridPoint> grid);

struct RobustnessRow {
  double eta = 0.0;
  double ratio = 0.0;
  double best_metric = 0.0;
  double last_metric = 0.0;
  bool diverged = false;
};

/// One row per evaluated step size, abscissa eta / eta_star.
std::vector<RobustnessRow> robustness_curve(const SweepResult& sweep, const StepSize& eta_star);

/// log10(max / min) over {eta : mean final <= factor * lowest mean final}.
double robust_log_width(const SweepResult& sweep, double factor);

/// eta_fzoo / mean(sigma). Throws InvalidArgument on an empty series.
double transfer_step_size(std::span<const double> sigma, double eta_fzoo);
double transfer_step_size(const Trace& fzoo_trace, double eta_fzoo);

nlohmann::json sweep_json(const SweepResult& sweep);
nlohmann::json robustness_json(const std::vector<RobustnessRow>& rows);

}  // namespace zo
