#include "zo/harness.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "zo/analysis.hpp"

namespace zo {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double squared_norm(std::span<const double> v) {
  double total = 0.0;
  for (double value : v) total += value * value;
  return total;
}

std::uint64_t noise_key(std::uint64_t noise_seed, std::uint64_t run_seed, std::uint64_t step) {
  return combine_key(combine_key(mix64(noise_seed), run_seed), step);
}

nlohmann::json number_or_null(double value) {
  if (std::isfinite(value)) return value;
  return nullptr;
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

Trace run_seed(const ExperimentConfig& config, std::uint64_t seed, const StepObserver& observer) {
  config.validate();
  const std::shared_ptr<const Objective> base = build_objective(config.objective);
  Vector x = initial_point(config, *base);

  OptimizerConfig opt = config.optimizer;
  opt.seed = seed;
  opt.partition = resolve_partition(config.partition, *base);
  std::unique_ptr<Optimizer> optimizer = make_optimizer(opt, x.size());

  Trace trace;
  trace.seed = seed;
  TraceSummary& summary = trace.summary;
  summary.persistent_state_size = optimizer->persistent_state_size();
  summary.initial_loss = base->value(x);
  summary.best_loss = std::numeric_limits<double>::infinity();
  summary.final_loss = summary.initial_loss;
  const bool has_gradient = base->has_gradient();
  const double sigma = config.objective.noise_sigma;
  if (config.threshold && summary.initial_loss <= *config.threshold) summary.steps_to_threshold = 0;

  const auto start = std::chrono::steady_clock::now();
  std::uint64_t evaluations = 0;
  std::uint64_t block_forwards = 0;
  double grad_sum = 0.0;

  for (std::uint64_t t = 0; t < config.T; ++t) {
    if (has_gradient) grad_sum += squared_norm(base->gradient(x));
    StepReport report;
    double loss = kNaN;
    try {
      if (sigma > 0.0) {
        const NoisySample sample = sample_noisy(base, sigma, noise_key(config.objective.noise_seed, seed, t));
        report = optimizer->step(sample, x, t);
      } else {
        report = optimizer->step(*base, x, t);
      }
      loss = base->value(x);
      if (!std::isfinite(loss)) throw NumericFailure("loss is non-finite");
      if (summary.initial_loss > 0.0 && loss > kDivergenceFactor * summary.initial_loss) {
        throw NumericFailure("loss exceeded the divergence cap");
      }
    } catch (const NumericFailure& failure) {
      summary.diverged = true;
      summary.diverged_at = t + 1;
      summary.divergence_reason = failure.what();
      summary.final_loss = std::numeric_limits<double>::infinity();
      break;
    }

    evaluations += report.evaluations;
    block_forwards += report.block_forwards;
    if (report.sigma) summary.sigma.push_back(*report.sigma);
    summary.steps_completed = t + 1;
    summary.final_loss = loss;
    summary.best_loss = std::min(summary.best_loss, loss);
    const bool reached = config.threshold && loss <= *config.threshold;
    if (reached && !summary.steps_to_threshold) summary.steps_to_threshold = t + 1;
    if (observer) observer(t + 1, x, *optimizer);

    const bool last = t + 1 == config.T || (reached && config.stop_at_threshold);
    if ((t + 1) % config.eval_every == 0 || last) {
      TraceRecord record;
      record.step = t + 1;
      record.loss = loss;
      record.grad_norm_sq = has_gradient ? squared_norm(base->gradient(x)) : kNaN;
      if (const auto v = optimizer->second_moment()) {
        const VtStats stats = vt_statistics(*v);
        record.v_min = stats.min;
        record.v_max = stats.max;
        record.v_mean = stats.mean;
      } else {
        record.v_min = record.v_max = record.v_mean = kNaN;
      }
      record.fn_evals = evaluations;
      record.block_forwards = block_forwards;
      record.elapsed_s =
          config.record_time
              ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
              : 0.0;
      trace.records.push_back(record);
    }
    if (reached && config.stop_at_threshold) break;
  }

  const std::uint64_t steps = summary.diverged ? *summary.diverged_at : summary.steps_completed;
  summary.mean_grad_norm_sq = has_gradient && steps > 0 ? grad_sum / static_cast<double>(steps) : kNaN;
  return trace;
}

std::vector<Trace> run(const ExperimentConfig& config) {
  config.validate();
  return parallel_map<Trace>(config.seeds.size(),
                             [&](std::size_t i) { return run_seed(config, config.seeds[i]); });
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
  out << kTraceHeader << '\n';
  for (const TraceRecord& r : trace.records) {
    out << r.step << ',' << format_number(r.loss) << ',' << format_number(r.grad_norm_sq) << ','
        << format_number(r.v_min) << ',' << format_number(r.v_max) << ','
        << format_number(r.v_mean) << ',' << r.fn_evals << ',' << r.block_forwards << ','
        << format_number(r.elapsed_s) << '\n';
  }
}

nlohmann::json summary_json(const Trace& trace) {
  const TraceSummary& s = trace.summary;
  nlohmann::json doc = {
      {"seed", trace.seed},
      {"initial_loss", number_or_null(s.initial_loss)},
      {"final_loss", number_or_null(s.final_loss)},
      {"best_loss", number_or_null(s.best_loss)},
      {"steps_to_threshold", nullptr},
      {"mean_grad_norm_sq", number_or_null(s.mean_grad_norm_sq)},
      {"steps_completed", s.steps_completed},
      {"diverged", s.diverged},
      {"persistent_state_size", s.persistent_state_size},
  };
  if (s.steps_to_threshold) doc["steps_to_threshold"] = *s.steps_to_threshold;
  if (s.diverged) {
    doc["diverged_at"] = *s.diverged_at;
    doc["divergence_reason"] = s.divergence_reason;
  }
  if (!s.sigma.empty()) doc["sigma"] = s.sigma;
  return doc;
}

void write_run_outputs(const std::filesystem::path& dir, const ExperimentConfig& config,
                       const std::vector<Trace>& traces) {
  std::filesystem::create_directories(dir);
  nlohmann::json runs = nlohmann::json::array();
  for (const Trace& trace : traces) {
    std::ofstream csv(dir / ("trace_seed" + std::to_string(trace.seed) + ".csv"));
    write_trace_csv(csv, trace);
    runs.push_back(summary_json(trace));
  }
  std::ofstream summary(dir / "summary.json");
  summary << nlohmann::json{{"config", to_json(config)}, {"runs", runs}}.dump(2) << '\n';
}

}  // namespace zo
