#include "zo/optimizer_runner.hpp"

#include <cmath>
#include <string>

namespace zo {
namespace {

PerturbationSpec spec_of(const OptimizerConfig& config) {
  PerturbationSpec spec{config.distribution, config.epsilon, config.seed};
  spec.validate();
  return spec;
}

bool is_layer_partition(const Objective& objective, const Partition& partition) {
  const auto* chain = dynamic_cast<const LayeredChain*>(&objective);
  return chain != nullptr && chain->layer_partition() == partition;
}

void check_dimension(const Objective& objective, std::span<const double> x) {
  if (objective.dimension() != x.size()) {
    throw InvalidArgument("objective and parameter dimensions differ");
  }
}

// Projected scalars (sample-major, p per sample) plus the step's cost.
struct Projection {
  std::vector<double> projected;
  StepReport report;
};

Projection project(const Objective& objective, std::span<const double> x,
                   const PerturbationSpec& spec, std::size_t q,
                   const std::optional<Partition>& partition, std::uint64_t t) {
  Projection out;
  const std::uint64_t per_eval = objective.blocks_per_evaluation();
  if (partition && is_layer_partition(objective, *partition)) {
    EfficientGroupedResult result = efficient_grouped_eval(objective, x, spec, q, t);
    out.projected = std::move(result.estimate.projected);
    out.report.evaluations = result.counter.full_forward_calls;
    out.report.block_forwards = result.counter.block_forward_calls;
    return out;
  }
  const ObjectiveFn f = objective.as_function();
  if (partition) {
    out.projected = grouped_projected(f, x, spec, q, *partition, t);
    out.report.evaluations = 2 * q * partition->block_count();
  } else {
    out.projected = zo_projected(f, x, spec, q, t);
    out.report.evaluations = 2 * q;
  }
  out.report.block_forwards = out.report.evaluations * per_eval;
  return out;
}

Vector rebuild(std::span<const double> projected, const PerturbationSpec& spec, std::size_t q,
               const Partition& partition, std::uint64_t t) {
  std::vector<double> coefficients(partition.block_count());
  for (std::size_t j = 0; j < coefficients.size(); ++j) {
    coefficients[j] =
        estimator_scale(spec.distribution, partition.block_size(j)) / static_cast<double>(q);
  }
  Vector estimate(partition.dimension(), 0.0);
  accumulate_replayed(estimate, projected, spec, q, partition, t, coefficients);
  return estimate;
}

// Shared plumbing for the optimizers that consume a full estimate vector.
class EstimateOptimizer : public Optimizer {
 public:
  EstimateOptimizer(const OptimizerConfig& config, std::size_t d)
      : spec_(spec_of(config)),
        q_(config.q),
        partition_(config.partition),
        whole_(Partition::single(d)) {}

 protected:
  Vector estimate(const Objective& objective, std::span<const double> x, std::uint64_t t,
                  StepReport& report) const {
    check_dimension(objective, x);
    Projection projection = project(objective, x, spec_, q_, partition_, t);
    report = projection.report;
    return rebuild(projection.projected, spec_, q_, partition_ ? *partition_ : whole_, t);
  }

  PerturbationSpec spec_;
  std::size_t q_;
  std::optional<Partition> partition_;
  Partition whole_;
};

class ZoSgd final : public EstimateOptimizer {
 public:
  ZoSgd(const OptimizerConfig& config, std::size_t d)
      : EstimateOptimizer(config, d), eta_(config.eta) {}

  StepReport step(const Objective& objective, std::span<double> x, std::uint64_t t) override {
    StepReport report;
    const Vector g = estimate(objective, x, t, report);
    zo_sgd_step(x, g, eta_);
    return report;
  }
  std::size_t persistent_state_size() const override { return 0; }
  std::string_view name() const override { return "zo-sgd"; }

 private:
  double eta_;
};

class ZoAdam final : public EstimateOptimizer {
 public:
  ZoAdam(const OptimizerConfig& config, std::size_t d, bool reduced)
      : EstimateOptimizer(config, d),
        state_(AdamState::zeros(d, config.eta, config.beta1, config.beta2, config.zeta)),
        reduced_(reduced) {}

  StepReport step(const Objective& objective, std::span<double> x, std::uint64_t t) override {
    StepReport report;
    const Vector g = estimate(objective, x, t, report);
    if (reduced_) {
      radazo_step(state_, x, g);
    } else {
      zo_adam_step(state_, x, g);
    }
    return report;
  }
  std::optional<Vector> second_moment() const override { return state_.corrected_v(); }
  std::size_t persistent_state_size() const override {
    return state_.m.size() + state_.v.size();
  }
  std::string_view name() const override { return reduced_ ? "radazo" : "zo-adam"; }

 private:
  AdamState state_;
  bool reduced_;
};

class Meazo final : public Optimizer {
 public:
  explicit Meazo(const OptimizerConfig& config) : spec_(spec_of(config)), q_(config.q) {
    state_.beta = config.beta;
    state_.eta = config.eta;
    state_.zeta = config.zeta;
  }

  StepReport step(const Objective& objective, std::span<double> x, std::uint64_t t) override {
    check_dimension(objective, x);
    Projection projection = project(objective, x, spec_, q_, std::nullopt, t);
    meazo_step(state_, x, projection.projected, spec_, t, q_);
    return projection.report;
  }
  std::optional<Vector> second_moment() const override { return Vector{state_.corrected()}; }
  std::size_t persistent_state_size() const override { return 1; }
  std::string_view name() const override { return "meazo"; }

 private:
  PerturbationSpec spec_;
  std::size_t q_;
  MeazoState state_;
};

class GroupedMeazo final : public Optimizer {
 public:
  explicit GroupedMeazo(const OptimizerConfig& config)
      : spec_(spec_of(config)),
        q_(config.q),
        partition_(*config.partition),
        state_(GroupedMeazoState::zeros(partition_.block_count(), config.eta, config.beta,
                                        config.zeta)) {}

  StepReport step(const Objective& objective, std::span<double> x, std::uint64_t t) override {
    check_dimension(objective, x);
    Projection projection = project(objective, x, spec_, q_, partition_, t);
    grouped_meazo_step(state_, x, projection.projected, spec_, partition_, t, q_);
    return projection.report;
  }
  std::optional<Vector> second_moment() const override { return state_.corrected(); }
  std::size_t persistent_state_size() const override { return state_.v.size(); }
  std::string_view name() const override { return "meazo-grouped"; }

 private:
  PerturbationSpec spec_;
  std::size_t q_;
  Partition partition_;
  GroupedMeazoState state_;
};

class Fzoo final : public Optimizer {
 public:
  explicit Fzoo(const OptimizerConfig& config)
      : spec_(spec_of(config)), state_{config.eta, config.epsilon, config.q} {}

  StepReport step(const Objective& objective, std::span<double> x, std::uint64_t t) override {
    check_dimension(objective, x);
    const FzooStepResult result = fzoo_step(objective.as_function(), x, state_, spec_, t);
    StepReport report;
    report.evaluations = result.evaluations;
    report.block_forwards = result.evaluations * objective.blocks_per_evaluation();
    report.sigma = result.sigma;
    return report;
  }
  std::size_t persistent_state_size() const override { return 0; }
  std::string_view name() const override { return "fzoo"; }

 private:
  PerturbationSpec spec_;
  FzooState state_;
};

// First-order references; each step costs one gradient call.
class FirstOrder final : public Optimizer {
 public:
  FirstOrder(const OptimizerConfig& config, std::size_t d, bool adaptive)
      : eta_(config.eta), adaptive_(adaptive) {
    if (adaptive_) state_ = AdamState::zeros(d, config.eta, config.beta1, config.beta2, config.zeta);
  }

  StepReport step(const Objective& objective, std::span<double> x, std::uint64_t) override {
    check_dimension(objective, x);
    const Vector g = objective.gradient(x);
    if (adaptive_) {
      zo_adam_step(state_, x, g);
    } else {
      zo_sgd_step(x, g, eta_);
    }
    StepReport report;
    report.evaluations = 1;
    report.block_forwards = objective.blocks_per_evaluation();
    return report;
  }
  std::optional<Vector> second_moment() const override {
    if (!adaptive_) return std::nullopt;
    return state_.corrected_v();
  }
  std::size_t persistent_state_size() const override {
    return state_.m.size() + state_.v.size();
  }
  std::string_view name() const override { return adaptive_ ? "fo-adam" : "fo-gd"; }

 private:
  double eta_;
  bool adaptive_;
  AdamState state_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument(message);
}

bool finite_positive(double value) { return std::isfinite(value) && value > 0.0; }

}  // namespace

const std::vector<std::string>& optimizer_names() {
  static const std::vector<std::string> names = {"zo-sgd", "zo-adam", "radazo", "meazo",
                                                 "meazo-grouped", "fzoo", "fo-adam", "fo-gd"};
  return names;
}

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& config, std::size_t d) {
  const std::string& name = config.name;
  require(d >= 1, "parameter dimension must be >= 1");
  require(finite_positive(config.eta), "eta must be > 0");
  require(finite_positive(config.zeta), "zeta must be > 0");
  require(finite_positive(config.epsilon), "epsilon must be > 0");
  require(config.beta > 0.0 && config.beta < 1.0, "beta must lie in (0, 1)");
  require(config.beta1 >= 0.0 && config.beta1 < 1.0, "beta1 must lie in [0, 1)");
  require(config.beta2 >= 0.0 && config.beta2 < 1.0, "beta2 must lie in [0, 1)");
  require(config.q >= 1, "q must be >= 1");
  if (config.partition) {
    require(config.partition->dimension() == d, "partition dimension does not match");
    require(name == "zo-sgd" || name == "zo-adam" || name == "radazo" || name == "meazo-grouped",
            "optimizer '" + name + "' does not take a partition");
  }

  if (name == "zo-sgd") return std::make_unique<ZoSgd>(config, d);
  if (name == "zo-adam") return std::make_unique<ZoAdam>(config, d, false);
  if (name == "radazo") return std::make_unique<ZoAdam>(config, d, true);
  if (name == "meazo") return std::make_unique<Meazo>(config);
  if (name == "meazo-grouped") {
    require(config.partition.has_value(), "meazo-grouped needs a partition");
    return std::make_unique<GroupedMeazo>(config);
  }
  if (name == "fzoo") {
    require(config.q >= 2, "FZOO needs q >= 2");
    return std::make_unique<Fzoo>(config);
  }
  if (name == "fo-adam") return std::make_unique<FirstOrder>(config, d, true);
  if (name == "fo-gd") return std::make_unique<FirstOrder>(config, d, false);
  throw InvalidArgument("unknown optimizer '" + name + "'");
}

}  // namespace zo
