#include "zo/studies.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "zo/harness.hpp"

namespace zo {
namespace {

using nlohmann::json;

double squared_norm(std::span<const double> v) {
  double total = 0.0;
  for (double value : v) total += value * value;
  return total;
}

// Reads the allowed keys of a study config, turning type errors into ConfigError.
template <typename Fn>
void read_fields(const json& doc, const std::set<std::string>& allowed, const std::string& where,
                 Fn fn) {
  if (!doc.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& item : doc.items()) {
    if (allowed.count(item.key()) == 0) {
      throw ConfigError("unknown field '" + item.key() + "' in " + where);
    }
  }
  try {
    fn();
  } catch (const json::exception& error) {
    throw ConfigError(where + ": " + error.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& error) {
    throw ConfigError(where + ": " + error.what());
  }
}

template <typename T>
void maybe(const json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

}  // namespace

std::vector<CollapseRun> run_collapse_study(const CollapseConfig& config) {
  if (config.dims.empty() || config.optimizers.empty()) {
    throw InvalidArgument("collapse study needs dimensions and optimizers");
  }
  if (config.tail == 0) throw InvalidArgument("tail must be >= 1");
  struct Job {
    std::size_t d;
    std::string optimizer;
  };
  std::vector<Job> jobs;
  for (std::size_t d : config.dims) {
    for (const std::string& name : config.optimizers) jobs.push_back({d, name});
  }

  return parallel_map<CollapseRun>(jobs.size(), [&](std::size_t index) {
    const Job& job = jobs[index];
    ExperimentConfig run;
    run.objective.kind = ObjectiveKind::kQuadratic;
    run.objective.d = job.d;
    run.objective.regime = config.regime;
    run.objective.seed = config.objective_seed;
    run.optimizer.name = job.optimizer;
    run.optimizer.eta = config.eta;
    run.optimizer.q = config.q;
    run.optimizer.epsilon = config.epsilon;
    run.T = config.max_steps;
    run.seeds = {config.seed};
    run.eval_every = config.max_steps;
    run.init_loss = config.init_loss;
    run.init_seed = config.objective_seed;
    run.threshold = config.threshold;
    run.stop_at_threshold = true;

    const BlockQuadratic quad = BlockQuadratic::make(job.d, config.regime, config.objective_seed);
    std::deque<double> tail;
    Vector terminal_v;
    const StepObserver observer = [&](std::uint64_t, std::span<const double> x,
                                      const Optimizer& optimizer) {
      tail.push_back(squared_norm(quad.gradient(x)));
      if (tail.size() > config.tail) tail.pop_front();
      if (auto v = optimizer.second_moment()) terminal_v = std::move(*v);
    };
    const Trace trace = run_seed(run, config.seed, observer);

    CollapseRun out;
    out.optimizer = job.optimizer;
    out.d = job.d;
    out.steps = trace.summary.steps_completed;
    out.reached_threshold = trace.summary.steps_to_threshold.has_value();
    out.diverged = trace.summary.diverged;
    out.final_loss = trace.summary.final_loss;
    if (!terminal_v.empty()) {
      out.terminal_stats = vt_statistics(terminal_v);
      out.terminal_spread = out.terminal_stats.mean != 0.0
                                ? (out.terminal_stats.max - out.terminal_stats.min) /
                                      out.terminal_stats.mean
                                : 0.0;
      double target = 0.0;
      for (double value : tail) target += value;
      target /= static_cast<double>(std::max<std::size_t>(1, tail.size())) *
                static_cast<double>(config.q);
      out.tail_target = target;
      for (double value : terminal_v) {
        out.max_target_deviation = std::max(out.max_target_deviation, std::abs(value - target) / target);
      }
    }
    return out;
  });
}

CollapseConfig parse_collapse_config(const json& doc) {
  CollapseConfig config;
  read_fields(doc,
              {"dims", "optimizers", "regime", "eta", "q", "epsilon", "threshold", "init_loss",
               "max_steps", "tail", "seed", "objective_seed"},
              "fig2 config", [&] {
                maybe(doc, "dims", config.dims);
                maybe(doc, "optimizers", config.optimizers);
                if (doc.contains("regime")) config.regime = parse_regime(doc.at("regime").get<std::string>());
                maybe(doc, "eta", config.eta);
                maybe(doc, "q", config.q);
                maybe(doc, "epsilon", config.epsilon);
                maybe(doc, "threshold", config.threshold);
                maybe(doc, "init_loss", config.init_loss);
                maybe(doc, "max_steps", config.max_steps);
                maybe(doc, "tail", config.tail);
                maybe(doc, "seed", config.seed);
                maybe(doc, "objective_seed", config.objective_seed);
              });
  if (config.max_steps == 0 || config.q == 0 || config.tail == 0) {
    throw ConfigError("fig2 config: max_steps, q and tail must be >= 1");
  }
  return config;
}

json collapse_json(const std::vector<CollapseRun>& runs) {
  json out = json::array();
  for (const CollapseRun& run : runs) {
    out.push_back({{"optimizer", run.optimizer},
                   {"d", run.d},
                   {"steps", run.steps},
                   {"reached_threshold", run.reached_threshold},
                   {"diverged", run.diverged},
                   {"final_loss", std::isfinite(run.final_loss) ? json(run.final_loss) : json()},
                   {"terminal_spread", run.terminal_spread},
                   {"v_min", run.terminal_stats.min},
                   {"v_max", run.terminal_stats.max},
                   {"v_mean", run.terminal_stats.mean},
                   {"v_std", run.terminal_stats.std},
                   {"v_kurtosis", run.terminal_stats.kurtosis},
                   {"tail_target", run.tail_target},
                   {"max_target_deviation", run.max_target_deviation}});
  }
  return out;
}

std::vector<BoundCheckResult> run_bound_check(const BoundCheckConfig& config) {
  const BlockQuadratic quad = BlockQuadratic::make(config.d, Regime::kHeterogeneous, 0);
  const Vector x0 = quad.initial_point(config.init_loss, 0);
  const double L = quad.smoothness();
  const double f0 = quad.value(x0) - quad.optimum_value();
  const double radius = config.radius_factor * std::sqrt(squared_norm(x0));
  const double G = (L * radius) * (L * radius);
  const double T = static_cast<double>(config.T);
  const double sigma1_sq = (4.0 * static_cast<double>(config.d) - 1.0) / static_cast<double>(config.q);

  ExperimentConfig base;
  base.objective.kind = ObjectiveKind::kQuadratic;
  base.objective.d = config.d;
  base.objective.noise_sigma = config.sigma;
  base.optimizer.q = config.q;
  base.optimizer.epsilon = config.epsilon;
  base.optimizer.distribution = config.distribution;
  base.T = config.T;
  base.seeds = config.seeds;
  base.eval_every = config.T;
  base.init_loss = config.init_loss;

  auto observe = [&](const ExperimentConfig& run, BoundCheckResult& result) {
    struct SeedOutcome {
      double largest_norm = 0.0;
      double mean_grad_norm_sq = 0.0;
      bool diverged = false;
    };
    const auto outcomes = parallel_map<SeedOutcome>(run.seeds.size(), [&](std::size_t i) {
      SeedOutcome outcome;
      const Trace trace = run_seed(run, run.seeds[i], [&](std::uint64_t, std::span<const double> x,
                                                          const Optimizer&) {
        outcome.largest_norm = std::max(outcome.largest_norm, std::sqrt(squared_norm(x)));
      });
      outcome.diverged = trace.summary.diverged;
      outcome.mean_grad_norm_sq = trace.summary.mean_grad_norm_sq;
      return outcome;
    });
    for (const SeedOutcome& outcome : outcomes) {
      result.diverged = result.diverged || outcome.diverged;
      result.max_iterate_norm = std::max(result.max_iterate_norm, outcome.largest_norm);
      result.observed += outcome.mean_grad_norm_sq / static_cast<double>(outcomes.size());
    }
  };

  std::vector<BoundCheckResult> results;

  BoundCheckResult meazo;
  meazo.optimizer = "meazo";
  meazo.G = G;
  meazo.radius = radius;
  meazo.eta = config.meazo_eta_fraction * config.zeta / (2.0 * L);
  // 1 - beta is tiny; stay 1% inside the boundary so rounding in beta cannot
  // push the variance term over 1/4.
  const double root = 0.99 * config.zeta / (4.0 * G * (1.0 + sigma1_sq));
  meazo.beta = 1.0 - root * root;
  const TheoremConstants constants =
      theorem_constants(config.d, config.q, config.epsilon, L, config.sigma, G, meazo.beta, config.zeta);
  meazo.bound = meazo_bound(constants, f0, meazo.eta, T, config.epsilon, L);
  {
    ExperimentConfig run = base;
    run.optimizer.name = "meazo";
    run.optimizer.eta = meazo.eta;
    run.optimizer.beta = meazo.beta;
    run.optimizer.zeta = config.zeta;
    observe(run, meazo);
  }
  results.push_back(meazo);

  BoundCheckResult sgd;
  sgd.optimizer = "zo-sgd";
  sgd.G = G;
  sgd.radius = radius;
  sgd.eta = config.sgd_eta_fraction * 2.0 / ((1.0 + sigma1_sq) * L);
  sgd.bound = zosgd_bound(config.d, static_cast<double>(config.q), config.epsilon, L, config.sigma,
                          sgd.eta, T, f0);
  {
    ExperimentConfig run = base;
    run.optimizer.name = "zo-sgd";
    run.optimizer.eta = sgd.eta;
    observe(run, sgd);
  }
  // The region only matters for G, which ZO-SGD's bound does not use.
  sgd.radius = std::max(sgd.radius, sgd.max_iterate_norm);
  results.push_back(sgd);
  return results;
}

BoundCheckConfig parse_bound_check_config(const json& doc) {
  BoundCheckConfig config;
  read_fields(doc,
              {"d", "q", "epsilon", "sigma", "T", "seeds", "init_loss", "radius_factor", "zeta",
               "meazo_eta_fraction", "sgd_eta_fraction", "distribution"},
              "verify-bounds config", [&] {
                maybe(doc, "d", config.d);
                maybe(doc, "q", config.q);
                maybe(doc, "epsilon", config.epsilon);
                maybe(doc, "sigma", config.sigma);
                maybe(doc, "T", config.T);
                maybe(doc, "seeds", config.seeds);
                maybe(doc, "init_loss", config.init_loss);
                maybe(doc, "radius_factor", config.radius_factor);
                maybe(doc, "zeta", config.zeta);
                maybe(doc, "meazo_eta_fraction", config.meazo_eta_fraction);
                maybe(doc, "sgd_eta_fraction", config.sgd_eta_fraction);
                if (doc.contains("distribution")) {
                  config.distribution = parse_distribution(doc.at("distribution").get<std::string>());
                }
              });
  if (config.T == 0 || config.q == 0 || config.seeds.empty()) {
    throw ConfigError("verify-bounds config: T, q and seeds must be non-empty");
  }
  if (!(config.meazo_eta_fraction > 0.0 && config.meazo_eta_fraction <= 1.0) ||
      !(config.sgd_eta_fraction > 0.0 && config.sgd_eta_fraction < 1.0)) {
    throw ConfigError("verify-bounds config: eta fractions must lie in (0, 1]");
  }
  return config;
}

json bound_check_json(const std::vector<BoundCheckResult>& results) {
  json out = json::array();
  for (const BoundCheckResult& r : results) {
    out.push_back({{"optimizer", r.optimizer},
                   {"eta", r.eta},
                   {"beta", r.beta},
                   {"G", r.G},
                   {"radius", r.radius},
                   {"max_iterate_norm", r.max_iterate_norm},
                   {"observed_mean_grad_norm_sq", r.observed},
                   {"bound", r.bound},
                   {"diverged", r.diverged},
                   {"holds", r.holds()}});
  }
  return out;
}

Vector random_unit_vector(std::size_t d, std::uint64_t seed) {
  return sample_direction(PerturbationSpec{Distribution::kUniformSphere, 1.0, seed}, {0, 0, 0}, d);
}

std::vector<MomentCheck> verify_moments(const std::vector<MomentCase>& cases,
                                        std::size_t n_trials) {
  return parallel_map<MomentCheck>(cases.size(), [&](std::size_t i) {
    MomentCheck check;
    check.input = cases[i];
    if (check.input.g.empty()) check.input.g = random_unit_vector(check.input.d, check.input.seed);
    check.input.d = check.input.g.size();
    check.report = mc_squared_moment(check.input.g, check.input.q, check.input.distribution,
                                     n_trials, mix64(check.input.seed + 1));
    return check;
  });
}

MomentStudyConfig parse_moment_config(const json& doc) {
  MomentStudyConfig config;
  read_fields(doc, {"cases", "trials"}, "verify-moments config", [&] {
    maybe(doc, "trials", config.trials);
    if (!doc.contains("cases") || !doc.at("cases").is_array() || doc.at("cases").empty()) {
      throw ConfigError("verify-moments config needs a non-empty 'cases' list");
    }
    for (const json& item : doc.at("cases")) {
      MomentCase c;
      read_fields(item, {"d", "q", "distribution", "g", "seed"}, "moment case", [&] {
        maybe(item, "d", c.d);
        maybe(item, "q", c.q);
        maybe(item, "g", c.g);
        maybe(item, "seed", c.seed);
        if (item.contains("distribution")) {
          c.distribution = parse_distribution(item.at("distribution").get<std::string>());
        }
      });
      config.cases.push_back(c);
    }
  });
  return config;
}

json moments_json(const std::vector<MomentCheck>& checks) {
  json out = json::array();
  for (const MomentCheck& check : checks) {
    out.push_back({{"d", check.input.d},
                   {"q", check.input.q},
                   {"distribution", std::string(to_string(check.input.distribution))},
                   {"g", check.input.g},
                   {"empirical", check.report.empirical},
                   {"predicted", check.report.predicted},
                   {"standard_error", check.report.standard_error},
                   {"max_rel_err", check.report.max_rel_err},
                   {"max_z", check.report.max_z},
                   {"n_trials", check.report.n_trials},
                   {"within_4se", check.report.within(4.0)}});
  }
  return out;
}

}  // namespace zo
