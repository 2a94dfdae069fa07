// One PASS/FAIL line per acceptance criterion. Exit status is 1 when any
// criterion fails. The last line always reports how many were evaluated.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "zo/analysis.hpp"
#include "zo/estimators.hpp"
#include "zo/harness.hpp"
#include "zo/studies.hpp"
#include "zo/sweep.hpp"

using namespace zo;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof(buffer), pattern, args...);
  return buffer;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  double total = 0.0;
  for (double x : v) total += (x - m) * (x - m);
  return std::sqrt(total / static_cast<double>(v.size() - 1));
}

double median_steps(const std::vector<std::optional<std::uint64_t>>& steps) {
  std::vector<double> v;
  for (const auto& s : steps) v.push_back(s ? static_cast<double>(*s) : INFINITY);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Shared protocol for the heterogeneous d = 9 experiments (criteria 4, 5, 12):
// F(x0) = 1000 so the flattest block carries O(1) loss, T = 3000 steps,
// q = 10, eps = 1e-6, seeds 0..9.
ExperimentConfig heterogeneous_protocol(const std::string& optimizer, bool blocks) {
  ExperimentConfig config;
  config.objective.d = 9;
  config.objective.regime = Regime::kHeterogeneous;
  config.optimizer.name = optimizer;
  config.optimizer.q = 10;
  config.optimizer.epsilon = 1e-6;
  if (blocks) config.partition.kind = PartitionKind::kBlocks;
  config.T = 3000;
  config.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  config.eval_every = config.T;
  config.init_loss = 1000.0;
  config.threshold = 1e-3;
  return config;
}

Verdict moment_criterion(Distribution dist) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<std::pair<std::size_t, std::size_t>> shapes = {{2, 1}, {8, 1}, {8, 4}};
  bool pass = true;
  double worst_z = 0.0;
  double worst_rel = 0.0;
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto [d, q] = shapes[k];
    const Vector g = random_unit_vector(d, 100 + k);
    const MomentReport report = mc_squared_moment(g, q, dist, 1000000, 200 + k);
    pass = pass && report.within(4.0);
    worst_z = std::max(worst_z, report.max_z);
    worst_rel = std::max(worst_rel, report.max_rel_err);
  }
  std::string hand;
  if (dist == Distribution::kUniformSphere) {
    const Vector e1 = {1.0, 0.0};
    const struct {
      std::size_t q;
      double a;
      double b;
    } cases[] = {{1, 1.5, 0.5}, {2, 1.25, 0.25}};
    for (const auto& c : cases) {
      const MomentReport report = mc_squared_moment(e1, c.q, dist, 1000000, 300 + c.q);
      const bool exact = std::abs(report.predicted[0] - c.a) < 1e-15 &&
                         std::abs(report.predicted[1] - c.b) < 1e-15;
      const bool close = std::abs(report.empirical[0] - c.a) <= 4.0 * report.standard_error[0] &&
                         std::abs(report.empirical[1] - c.b) <= 4.0 * report.standard_error[1];
      pass = pass && exact && close;
      hand += fmt(" q=%zu MC (%.4f, %.4f)", c.q, report.empirical[0], report.empirical[1]);
    }
  }
  const double elapsed = seconds_since(start);
  pass = pass && elapsed < 60.0;
  return {pass, fmt("max z %.2f (limit 4), max rel err %.4f,%s runtime %.1fs (limit 60s)",
                    worst_z, worst_rel, hand.c_str(), elapsed)};
}

Verdict collapse_criterion() {
  CollapseConfig config;
  config.optimizers = {"fo-adam", "zo-adam"};
  const std::vector<CollapseRun> runs = run_collapse_study(config);
  std::vector<double> zo_spread;
  double zo_deviation = INFINITY;
  double zo_last = NAN;
  double fo_last = NAN;
  bool reached = true;
  for (const CollapseRun& run : runs) {
    if (run.optimizer == "zo-adam") {
      zo_spread.push_back(run.terminal_spread);
      if (run.d == 1024) {
        zo_deviation = run.max_target_deviation;
        zo_last = run.terminal_spread;
        reached = run.reached_threshold;
      }
    } else if (run.d == 1024) {
      fo_last = run.terminal_spread;
    }
  }
  bool monotone = true;
  std::string spreads;
  for (std::size_t k = 0; k < zo_spread.size(); ++k) {
    if (k > 0 && zo_spread[k] > zo_spread[k - 1]) monotone = false;
    spreads += fmt("%s%.3g", k ? "," : "", zo_spread[k]);
  }
  const bool collapsed = zo_deviation <= 0.25;
  const bool ratio = fo_last >= 5.0 * zo_last;
  return {monotone && collapsed && ratio,
          fmt("zo-adam spread over d=9..1024 [%s] non-increasing=%s; d=1024 max |v_k/target-1| "
              "%.3f (limit 0.25%s); fo/zo spread at d=1024 %.1f (limit 5)",
              spreads.c_str(), monotone ? "yes" : "no", zo_deviation,
              reached ? "" : ", threshold not reached, measured at the step cap",
              fo_last / zo_last)};
}

struct TunedRuns {
  SweepResult sgd;
  SweepResult adam;
  SweepResult meazo;
};

TunedRuns tuned_block_runs() {
  return {coarse_fine_sweep(heterogeneous_protocol("zo-sgd", true), SweepMetric::kFinal),
          coarse_fine_sweep(heterogeneous_protocol("zo-adam", true), SweepMetric::kFinal),
          coarse_fine_sweep(heterogeneous_protocol("meazo-grouped", true), SweepMetric::kFinal)};
}

Verdict ordering_criterion(const TunedRuns& runs) {
  if (!runs.sgd.best_eta || !runs.adam.best_eta || !runs.meazo.best_eta) {
    return {false, "a sweep diverged everywhere"};
  }
  const double sgd = median_steps(runs.sgd.best().per_seed_steps_to_threshold);
  const double adam = median_steps(runs.adam.best().per_seed_steps_to_threshold);
  const double meazo = median_steps(runs.meazo.best().per_seed_steps_to_threshold);
  return {meazo <= sgd && adam <= sgd,
          fmt("median steps to 1e-3: meazo %.1f (eta %.0e), zo-adam %.1f (eta %.0e), zo-sgd %.1f "
              "(eta %.0e)",
              meazo, runs.meazo.best_eta->value(), adam, runs.adam.best_eta->value(), sgd,
              runs.sgd.best_eta->value())};
}

Verdict robustness_criterion(const TunedRuns& runs) {
  const double meazo = robust_log_width(runs.meazo, 10.0);
  const double sgd = robust_log_width(runs.sgd, 10.0);
  return {meazo > sgd,
          fmt("log10 width of {eta: final <= 10x best}: meazo %.3f (best %.3g), zo-sgd %.3f "
              "(best %.3g)",
              meazo, runs.meazo.best().mean_final, sgd, runs.sgd.best().mean_final)};
}

Verdict forward_criterion() {
  const LayeredChain chain = LayeredChain::make(16, 4, 7);
  const Vector x = chain.initial_point();
  const PerturbationSpec spec{Distribution::kGaussian, 1e-3, 5};
  const EfficientGroupedResult fast = efficient_grouped_eval(chain, x, spec, 1, 0);
  std::uint64_t full_calls = 0;
  const ObjectiveFn counted = [&](std::span<const double> v) {
    ++full_calls;
    return chain.value(v);
  };
  const ZoEstimate naive = grouped_zo_gradient(counted, x, spec, 1, chain.layer_partition(), 0);
  const std::uint64_t naive_forwards = full_calls * chain.block_count();
  const std::uint64_t fast_forwards = fast.counter.block_forward_calls;
  const double ratio = static_cast<double>(naive_forwards) / static_cast<double>(fast_forwards);
  const bool same = fast.estimate.gradient == naive.gradient;
  return {fast_forwards == 287 && naive_forwards == 512 && std::abs(ratio - 512.0 / 287.0) < 1e-15 &&
              same,
          fmt("p=16 q=1: efficient %llu block forwards, naive %llu, ratio %.3f, estimates "
              "bit-identical=%s",
              static_cast<unsigned long long>(fast_forwards),
              static_cast<unsigned long long>(naive_forwards), ratio, same ? "yes" : "no")};
}

Verdict unbiased_criterion() {
  const BlockQuadratic quad = BlockQuadratic::make(9, Regime::kHeterogeneous, 3);
  const Vector x = quad.initial_point(1.0, 4);
  const Vector truth = quad.gradient(x);
  const auto f = quad.as_function();
  const PerturbationSpec spec{Distribution::kUniformSphere, 1e-3, 11};
  const std::size_t n = 1000000;
  const std::size_t d = x.size();
  Vector sum(d, 0.0);
  Vector sum_sq(d, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const ZoEstimate est = zo_gradient(f, x, spec, 1, s);
    for (std::size_t k = 0; k < d; ++k) {
      sum[k] += est.gradient[k];
      sum_sq[k] += est.gradient[k] * est.gradient[k];
    }
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double mean = sum[k] / n;
    const double se = std::sqrt((sum_sq[k] / n - mean * mean) / n);
    worst = std::max(worst, std::abs(mean - truth[k]) / se);
  }
  return {worst <= 4.0, fmt("1e6 draws, max |mean - Hx| / se = %.2f (limit 4)", worst)};
}

Verdict smoothing_criterion() {
  bool pass = true;
  double min_slack = INFINITY;
  double max_grad_err = 0.0;
  for (Regime regime : {Regime::kHeterogeneous, Regime::kHomogeneous}) {
    for (std::size_t d : {9u, 25u}) {
      const BlockQuadratic quad = BlockQuadratic::make(d, regime, 1);
      std::vector<Vector> points;
      for (std::uint64_t s = 0; s < 100; ++s) points.push_back(random_unit_vector(d, 1000 + s));
      for (SmoothingLaw law : {SmoothingLaw::kBall, SmoothingLaw::kSphere, SmoothingLaw::kGaussian}) {
        for (double eps : {1e-3, 0.1, 1.0}) {
          const SmoothingReport report = check_smoothing_inequalities(quad, eps, law, points);
          pass = pass && report.holds() && report.max_gradient_error == 0.0 && report.points == 100;
          min_slack = std::min({min_slack, report.function_slack, report.gradient_slack});
          max_grad_err = std::max(max_grad_err, report.max_gradient_error);
        }
      }
    }
  }
  return {pass, fmt("100 points x 2 regimes x 2 dims x 3 laws x 3 eps: min slack %.3g, max "
                    "gradient error %.3g",
                    min_slack, max_grad_err)};
}

Verdict equivalence_criterion() {
  const BlockQuadratic quad = BlockQuadratic::make(1, Regime::kHeterogeneous, 0);
  OptimizerConfig meazo;
  meazo.name = "meazo";
  meazo.eta = 1e-2;
  meazo.beta = 0.999;
  meazo.zeta = 1e-8;
  // With q > 1 MEAZO squares the averaged projected gradient, ZO-Adam the
  // averaged estimate; they only coincide for a single sample.
  meazo.q = 1;
  meazo.distribution = Distribution::kRademacher;
  meazo.epsilon = 1e-4;
  meazo.seed = 9;
  OptimizerConfig adam = meazo;
  adam.name = "zo-adam";
  adam.beta1 = 0.0;
  adam.beta2 = meazo.beta;
  auto a = make_optimizer(meazo, 1);
  auto b = make_optimizer(adam, 1);
  Vector xa = quad.initial_point(1.0, 0);
  Vector xb = xa;
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    a->step(quad, xa, t);
    b->step(quad, xb, t);
    worst = std::max(worst, std::abs(xa[0] - xb[0]));
  }
  return {worst <= 1e-12, fmt("d=1 q=1 Rademacher beta1=0, 100 steps: max |x_meazo - x_adam| = %.3g "
                              "(limit 1e-12)",
                              worst)};
}

Verdict bound_criterion() {
  const std::vector<BoundCheckResult> results = run_bound_check(BoundCheckConfig{});
  bool pass = true;
  std::string detail;
  for (const BoundCheckResult& r : results) {
    pass = pass && r.holds();
    detail += fmt("%s observed %.4g <= bound %.4g (max |x| %.3g, R %.3g); ", r.optimizer.c_str(),
                  r.observed, r.bound, r.max_iterate_norm, r.radius);
  }
  const double L = 100.0;
  const double classical = classical_sgd_bound(L, 0.3, 0.01, 500.0, 2.0);
  const double limit = zosgd_bound(9, 1e9, 1e-12, L, 0.3, 0.01, 500.0, 2.0);
  const double rel = std::abs(limit - classical) / classical;
  pass = pass && results.size() == 2 && rel <= 1e-6;
  detail += fmt("q=1e9 eps=1e-12 vs classical SGD rel diff %.2g (limit 1e-6)", rel);
  return {pass, detail};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

Verdict determinism_criterion() {
  const auto root = std::filesystem::temp_directory_path() / "zo_acceptance_determinism";
  std::filesystem::remove_all(root);
  bool identical = true;
  std::size_t files = 0;
  for (const char* name : {"meazo", "zo-adam", "zo-sgd"}) {
    ExperimentConfig config = heterogeneous_protocol(name, false);
    config.optimizer.eta = 1e-4;
    config.T = 500;
    config.eval_every = 1;
    config.seeds = {0, 1, 2};
    write_run_outputs(root / name / "a", config, run(config));
    write_run_outputs(root / name / "b", config, run(config));
    for (const auto& entry : std::filesystem::directory_iterator(root / name / "a")) {
      const auto other = root / name / "b" / entry.path().filename();
      identical = identical && read_file(entry.path()) == read_file(other);
      ++files;
    }
  }
  std::filesystem::remove_all(root);
  bool shape = true;
  for (std::size_t d : {9u, 1024u}) {
    OptimizerConfig meazo;
    meazo.name = "meazo";
    OptimizerConfig adam;
    adam.name = "zo-adam";
    shape = shape && make_optimizer(meazo, d)->persistent_state_size() == 1 &&
            make_optimizer(adam, d)->persistent_state_size() == 2 * d;
  }
  return {identical && shape && files == 12,
          fmt("%zu output files byte-identical=%s; meazo state 1 scalar and zo-adam 2d reals at "
              "d=9,1024: %s",
              files, identical ? "yes" : "no", shape ? "yes" : "no")};
}

Verdict ablation_criterion() {
  std::vector<double> finals[2];
  const double beta1s[2] = {0.0, 0.9};
  for (int k = 0; k < 2; ++k) {
    ExperimentConfig config = heterogeneous_protocol("zo-adam", false);
    config.optimizer.eta = 1e-4;
    config.optimizer.beta1 = beta1s[k];
    for (const Trace& trace : run(config)) finals[k].push_back(trace.summary.final_loss);
  }
  const double gap = std::abs(mean_of(finals[0]) - mean_of(finals[1]));
  const double spread = std::min(sample_std(finals[0]), sample_std(finals[1]));
  const bool beta_ok = gap < spread;

  double lo = INFINITY;
  double hi = 0.0;
  std::string per;
  for (Distribution dist : {Distribution::kGaussian, Distribution::kUniformSphere,
                            Distribution::kRademacher, Distribution::kTernary}) {
    ExperimentConfig config = heterogeneous_protocol("zo-sgd", false);
    config.optimizer.distribution = dist;
    const SweepResult sweep = coarse_fine_sweep(config, SweepMetric::kFinal);
    const double final_loss = sweep.best_eta ? sweep.best().mean_final : INFINITY;
    lo = std::min(lo, final_loss);
    hi = std::max(hi, final_loss);
    per += fmt(" %s %.3g@%.0e", std::string(to_string(dist)).c_str(), final_loss,
               sweep.best_eta ? sweep.best_eta->value() : NAN);
  }
  const bool dist_ok = hi <= 2.0 * lo;
  return {beta_ok && dist_ok,
          fmt("zo-adam beta1 0 vs 0.9 mean final gap %.3g vs 10-seed std %.3g (%s); zo-sgd tuned "
              "finals%s, max/min %.2f (limit 2, %s)",
              gap, spread, beta_ok ? "ok" : "too large", per.c_str(), hi / lo,
              dist_ok ? "ok" : "too large")};
}

}  // namespace

int main() {
  int failures = 0;
  int evaluated = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& criterion) {
    const auto start = std::chrono::steady_clock::now();
    Verdict verdict;
    try {
      verdict = criterion();
    } catch (const std::exception& error) {
      verdict = {false, std::string("error: ") + error.what()};
    }
    ++evaluated;
    if (!verdict.pass) ++failures;
    std::printf("%s [%d] %s: %s [%.1fs]\n", verdict.pass ? "PASS" : "FAIL", id, name,
                verdict.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  };

  report(1, "gaussian squared moment", [] { return moment_criterion(Distribution::kGaussian); });
  report(2, "uniform squared moment", [] { return moment_criterion(Distribution::kUniformSphere); });
  report(3, "second-moment collapse", collapse_criterion);
  std::optional<TunedRuns> tuned;
  auto tuned_runs = [&]() -> const TunedRuns& {
    if (!tuned) tuned = tuned_block_runs();
    return *tuned;
  };
  report(4, "convergence ordering", [&] { return ordering_criterion(tuned_runs()); });
  report(5, "step-size robustness", [&] { return robustness_criterion(tuned_runs()); });
  report(6, "forward-call accounting", forward_criterion);
  report(7, "estimator unbiasedness", unbiased_criterion);
  report(8, "smoothing inequalities", smoothing_criterion);
  report(9, "meazo / zo-adam equivalence", equivalence_criterion);
  report(10, "theorem bounds", bound_criterion);
  report(11, "determinism and memory shape", determinism_criterion);
  report(12, "beta1 and distribution ablations", ablation_criterion);

  std::printf("acceptance: %d criteria evaluated, %d passed, %d failed\n", evaluated,
              evaluated - failures, failures);
  return failures == 0 ? 0 : 1;
}
