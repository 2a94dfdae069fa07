#include "zo/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace zo {
namespace {


double mean_of(std::span<const double> values) {
  double total = 0.0;
  for (double value : values) total += value;
  return total / static_cast<double>(values.size());
}

double std_of(std::span<const double> values, double mean) {
  double total = 0.0;
  for (double value : values) total += (value - mean) * (value - mean);
  return std::sqrt(total / static_cast<double>(values.size()));
}

GridPoint evaluate_point(const StepSize& eta, int stage, std::span<const Trace> traces,
                         SweepMetric metric, double sentinel) {
  GridPoint point;
  point.eta = eta;
  point.stage = stage;
  std::vector<double> metrics;
  for (const Trace& trace : traces) {
    const TraceSummary& s = trace.summary;
    const double final_loss = capped_metric(s.final_loss, s.diverged, sentinel);
    const double best_loss = capped_metric(s.best_loss, s.diverged, sentinel);
    point.per_seed_final.push_back(final_loss);
    point.per_seed_best.push_back(best_loss);
    point.per_seed_steps_to_threshold.push_back(s.steps_to_threshold);
    if (s.diverged) ++point.diverged_seeds;
    metrics.push_back(metric == SweepMetric::kFinal ? final_loss : best_loss);
  }
  point.mean_metric = mean_of(metrics);
  point.std_metric = std_of(metrics, point.mean_metric);
  point.mean_final = mean_of(point.per_seed_final);
  point.mean_best = mean_of(point.per_seed_best);
  return point;
}

// Runs every (eta, seed) pair concurrently and folds them back per eta.
std::vector<GridPoint> evaluate(const ExperimentConfig& base, SweepMetric metric,
                                std::span<const StepSize> etas, int stage, double sentinel) {
  const std::size_t seeds = base.seeds.size();
  const std::vector<Trace> traces =
      parallel_map<Trace>(etas.size() * seeds, [&](std::size_t job) {
        ExperimentConfig config = base;
        config.optimizer.eta = etas[job / seeds].value();
        return run_seed(config, base.seeds[job % seeds]);
      });
  std::vector<GridPoint> out;
  for (std::size_t e = 0; e < etas.size(); ++e) {
    out.push_back(evaluate_point(etas[e], stage,
                                 std::span<const Trace>(traces).subspan(e * seeds, seeds), metric,
                                 sentinel));
  }
  return out;
}

double initial_loss_of(const ExperimentConfig& base) {
  const auto objective = build_objective(base.objective);
  return objective->value(initial_point(base, *objective));
}

void finish(SweepResult& result) {
  std::sort(result.grid.begin(), result.grid.end(),
            [](const GridPoint& a, const GridPoint& b) { return a.eta < b.eta; });
  result.all_diverged = std::all_of(result.grid.begin(), result.grid.end(), [](const GridPoint& p) {
    return p.diverged_seeds == p.per_seed_final.size();
  });
  if (!result.all_diverged) result.best_eta = result.grid[argmin_metric(result.grid)].eta;
}

}  // namespace

double StepSize::value() const { return mantissa * std::pow(10.0, exponent); }

std::vector<StepSize> coarse_grid() {
  std::vector<StepSize> grid;
  for (int k = -6; k <= -2; ++k) {
    grid.push_back({1, k});
    grid.push_back({5, k});
  }
  grid.push_back({1, -1});
  return grid;
}

StepSize coarse_successor(const StepSize& eta) {
  if (eta.mantissa == 1) return {5, eta.exponent};
  if (eta.mantissa == 5) return {1, eta.exponent + 1};
  throw InvalidArgument("not a coarse-grid step size");
}

StepSize coarse_predecessor(const StepSize& eta) {
  if (eta.mantissa == 5) return {1, eta.exponent};
  if (eta.mantissa == 1) return {5, eta.exponent - 1};
  throw InvalidArgument("not a coarse-grid step size");
}

std::vector<StepSize> fine_candidates(const StepSize& lower, const StepSize& upper) {
  std::vector<StepSize> out;
  for (int k = lower.exponent; k <= upper.exponent; ++k) {
    for (int m = 1; m <= 9; ++m) {
      const StepSize candidate{m, k};
      if (lower < candidate && candidate < upper) out.push_back(candidate);
    }
  }
  return out;
}

std::vector<StepSize> fine_grid(const Bracket& bracket) {
  std::vector<StepSize> out = fine_candidates(bracket.lower, bracket.winner);
  out.push_back(bracket.winner);
  for (const StepSize& eta : fine_candidates(bracket.winner, bracket.upper)) out.push_back(eta);
  return out;
}

const GridPoint* SweepResult::find(const StepSize& eta) const {
  for (const GridPoint& point : grid) {
    if (point.eta == eta) return &point;
  }
  return nullptr;
}

const GridPoint& SweepResult::best() const {
  if (!best_eta) throw InvalidArgument("sweep has no winner: every run diverged");
  return *find(*best_eta);
}

double capped_metric(double value, bool diverged, double sentinel) {
  if (diverged || !std::isfinite(value)) return sentinel;
  return std::min(value, sentinel);
}

std::size_t argmin_metric(std::span<const GridPoint> grid) {
  if (grid.empty()) throw InvalidArgument("empty sweep grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const bool lower = grid[i].mean_metric < grid[best].mean_metric;
    const bool tie_smaller = grid[i].mean_metric == grid[best].mean_metric && grid[i].eta < grid[best].eta;
    if (lower || tie_smaller) best = i;
  }
  return best;
}

SweepResult grid_sweep(const ExperimentConfig& base, SweepMetric metric,
                       std::span<const StepSize> etas) {
  base.validate();
  SweepResult result;
  result.metric = metric;
  result.sentinel = kDivergenceFactor * initial_loss_of(base);
  result.grid = evaluate(base, metric, etas, 1, result.sentinel);
  finish(result);
  return result;
}

SweepResult coarse_fine_sweep(const ExperimentConfig& base, SweepMetric metric) {
  base.validate();
  SweepResult result;
  result.metric = metric;
  result.sentinel = kDivergenceFactor * initial_loss_of(base);

  const std::vector<StepSize> coarse = coarse_grid();
  result.grid = evaluate(base, metric, coarse, 1, result.sentinel);
  const StepSize winner = result.grid[argmin_metric(result.grid)].eta;
  const Bracket bracket{coarse_predecessor(winner), winner, coarse_successor(winner)};
  result.bracket = bracket;

  std::vector<StepSize> fresh;
  for (const StepSize& eta : fine_grid(bracket)) {
    const bool seen = std::any_of(result.grid.begin(), result.grid.end(),
                                  [&](const GridPoint& p) { return p.eta == eta; });
    if (!seen) fresh.push_back(eta);
  }
  for (GridPoint& point : evaluate(base, metric, fresh, 2, result.sentinel)) {
    result.grid.push_back(std::move(point));
  }
  finish(result);
  return result;
}

std::vector<RobustnessRow> robustness_curve(const SweepResult& sweep, const StepSize& eta_star) {
  std::vector<RobustnessRow> rows;
  const double star = eta_star.value();
  for (const GridPoint& point : sweep.grid) {
    RobustnessRow row;
    row.eta = point.eta.value();
    row.ratio = row.eta / star;
    row.best_metric = point.mean_best;
    row.last_metric = point.mean_final;
    row.diverged = point.diverged_seeds > 0;
    rows.push_back(row);
  }
  return rows;
}

double robust_log_width(const SweepResult& sweep, double factor) {
  if (sweep.grid.empty()) throw InvalidArgument("empty sweep grid");
  double lowest = std::numeric_limits<double>::infinity();
  for (const GridPoint& point : sweep.grid) lowest = std::min(lowest, point.mean_final);
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const GridPoint& point : sweep.grid) {
    if (point.mean_final <= factor * lowest) {
      lo = std::min(lo, point.eta.value());
      hi = std::max(hi, point.eta.value());
    }
  }
  return std::log10(hi / lo);
}

double transfer_step_size(std::span<const double> sigma, double eta_fzoo) {
  if (sigma.empty()) throw InvalidArgument("transfer needs a non-empty sigma series");
  return eta_fzoo / mean_of(sigma);
}

double transfer_step_size(const Trace& fzoo_trace, double eta_fzoo) {
  return transfer_step_size(fzoo_trace.summary.sigma, eta_fzoo);
}

nlohmann::json sweep_json(const SweepResult& sweep) {
  nlohmann::json grid = nlohmann::json::array();
  for (const GridPoint& point : sweep.grid) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : point.per_seed_steps_to_threshold) {
      steps.push_back(s ? nlohmann::json(*s) : nlohmann::json(nullptr));
    }
    grid.push_back({{"eta", point.eta.value()},
                    {"stage", point.stage},
                    {"mean_metric", point.mean_metric},
                    {"std_metric", point.std_metric},
                    {"mean_final", point.mean_final},
                    {"mean_best", point.mean_best},
                    {"diverged_seeds", point.diverged_seeds},
                    {"per_seed_final", point.per_seed_final},
                    {"per_seed_steps_to_threshold", steps}});
  }
  nlohmann::json doc = {{"metric", to_string(sweep.metric)},
                        {"sentinel", sweep.sentinel},
                        {"all_diverged", sweep.all_diverged},
                        {"grid", grid},
                        {"best_eta", nullptr}};
  if (sweep.best_eta) doc["best_eta"] = sweep.best_eta->value();
  if (sweep.bracket) {
    doc["bracket"] = {sweep.bracket->lower.value(), sweep.bracket->winner.value(),
                      sweep.bracket->upper.value()};
  }
  return doc;
}

nlohmann::json robustness_json(const std::vector<RobustnessRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const RobustnessRow& row : rows) {
    out.push_back({{"eta", row.eta},
                   {"ratio", row.ratio},
                   {"best_metric", row.best_metric},
                   {"last_metric", row.last_metric},
                   {"diverged", row.diverged}});
  }
  return out;
}

}  // namespace zo
