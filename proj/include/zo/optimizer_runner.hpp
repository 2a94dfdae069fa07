#pragma once

// Optimizers selected by name. Each instance owns its state and the
// perturbation key, so one object drives exactly one run.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zo/estimators.hpp"
#include "zo/objectives.hpp"
#include "zo/optimizers.hpp"
#include "zo/perturb.hpp"

namespace zo {

struct OptimizerConfig {
  /// zo-sgd, zo-adam, radazo, meazo, meazo-grouped, fzoo, fo-adam, fo-gd.
  std::string name = "meazo";
  double eta = 1e-4;
  double beta = 0.999;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double zeta = kDefaultZeta;
  double epsilon = 1e-6;
  std::size_t q = 1;
  Distribution distribution = Distribution::kGaussian;
  std::uint64_t seed = 0;
  /// Grouped estimator partition. Required by meazo-grouped; optional for
  /// zo-sgd, zo-adam and radazo.
  std::optional<Partition> partition;
};

struct StepReport {
  std::uint64_t evaluations = 0;
  std::uint64_t block_forwards = 0;
  /// FZOO's sigma_t.
  std::optional<double> sigma;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;

  /// Advances x by one step at iteration t (t also keys the directions).
  virtual StepReport step(const Objective& objective, std::span<double> x, std::uint64_t t) = 0;

  /// Bias-corrected second moment (per coordinate, per block, or the single
  /// scalar); nullopt for optimizers without one.
  virtual std::optional<Vector> second_moment() const { return std::nullopt; }

  /// Reals kept between steps, excluding counters and hyperparameters.
  virtual std::size_t persistent_state_size() const = 0;

  virtual std::string_view name() const = 0;
};

/// Known optimizer names, in config spelling.
const std::vector<std::string>& optimizer_names();

/// Validates hyperparameters against their domains and builds the optimizer
/// for dimension d. Throws InvalidArgument on any violation.
std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& config, std::size_t d);

}  // namespace zo
