#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "zo/config.hpp"
#include "zo/optimizer_runner.hpp"

namespace zo {

struct TraceRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  /// NaN when the objective has no gradient oracle.
  double grad_norm_sq = 0.0;
  /// NaN when the optimizer keeps no second moment.
  double v_min = 0.0;
  double v_max = 0.0;
  double v_mean = 0.0;
  std::uint64_t fn_evals = 0;
  std::uint64_t block_forwards = 0;
  double elapsed_s = 0.0;
};

struct TraceSummary {
  double initial_loss = 0.0;
  /// +inf when the run diverged.
  double final_loss = 0.0;
  /// Lowest F(x_t) over completed steps t >= 1.
  double best_loss = 0.0;
  std::optional<std::uint64_t> steps_to_threshold;
  /// (1/T) sum_{t<T} ||grad F(x_t)||^2 over completed steps; NaN without an oracle.
  double mean_grad_norm_sq = 0.0;
  std::uint64_t steps_completed = 0;
  bool diverged = false;
  std::optional<std::uint64_t> diverged_at;
  std::string divergence_reason;
  /// Per-step sigma_t (FZOO only).
  std::vector<double> sigma;
  std::size_t persistent_state_size = 0;
};

struct Trace {
  std::uint64_t seed = 0;
  std::vector<TraceRecord> records;
  TraceSummary summary;
};

/// A run whose loss exceeds this multiple of its initial loss is treated as
/// diverged. Far out, eps-perturbations fall below one ulp of x and the
/// iterate freezes at a huge finite loss instead of overflowing.
inline constexpr double kDivergenceFactor = 1e6;

/// Called after every completed step with the new iterate.
using StepObserver =
    std::function<void(std::uint64_t step, std::span<const double> x, const Optimizer& optimizer)>;

/// One seed. A NumericFailure or non-finite loss truncates the trace and sets
/// the divergence marker instead of throwing.
Trace run_seed(const ExperimentConfig& config, std::uint64_t seed,
               const StepObserver& observer = {});

/// Every seed in config order; seeds run concurrently.
std::vector<Trace> run(const ExperimentConfig& config);

inline constexpr const char* kTraceHeader =
    "step,loss,grad_norm_sq,v_min,v_max,v_mean,fn_evals,block_forwards,elapsed_s";

void write_trace_csv(std::ostream& out, const Trace& trace);
nlohmann::json summary_json(const Trace& trace);

/// trace_seed<seed>.csv per seed plus summary.json (config and summaries).
void write_run_outputs(const std::filesystem::path& dir, const ExperimentConfig& config,
                       const std::vector<Trace>& traces);

/// Shortest round-trip text for a double; empty for NaN, "inf"/"-inf" otherwise.
std::string format_number(double value);

/// Runs fn(0..n-1) on up to hardware_concurrency threads and returns results
/// in index order. The first exception (by index) is rethrown.
template <typename Result, typename Fn>
std::vector<Result> parallel_map(std::size_t n, Fn fn) {
  std::vector<std::optional<Result>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
  }
  std::vector<Result> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

}  // namespace zo
