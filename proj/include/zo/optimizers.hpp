#pragma once

// Step rules. Each takes the projected-gradient scalars or an estimate and
// updates x in place; state structs own everything that persists between steps.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "zo/errors.hpp"
#include "zo/estimators.hpp"
#include "zo/perturb.hpp"

namespace zo {

inline constexpr double kDefaultZeta = 1e-8;

/// MEAZO keeps one scalar: the EMA of the squared mean projected gradient.
struct MeazoState {
  double v = 0.0;
  std::uint64_t t = 0;
  double beta = 0.999;
  double eta = 1e-4;
  double zeta = kDefaultZeta;

  /// v / (1 - beta^t); zero before the first step.
  double corrected() const;
};

/// One scalar per partition block, shared beta/eta/zeta.
struct GroupedMeazoState {
  std::vector<double> v;
  std::uint64_t t = 0;
  double beta = 0.999;
  double eta = 1e-4;
  double zeta = kDefaultZeta;

  static GroupedMeazoState zeros(std::size_t blocks, double eta, double beta = 0.999,
                                 double zeta = kDefaultZeta);
  std::vector<double> corrected() const;
};

/// Shared by ZO-Adam, R-AdaZO and the first-order Adam reference.
struct AdamState {
  Vector m;
  Vector v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t t = 0;
  double eta = 1e-4;
  double zeta = kDefaultZeta;

  static AdamState zeros(std::size_t d, double eta, double beta1 = 0.9, double beta2 = 0.999,
                         double zeta = kDefaultZeta);
  Vector corrected_v() const;
};

struct FzooState {
  double eta = 1e-4;
  double epsilon = 1e-3;
  std::size_t q = 2;
};

struct FzooStepResult {
  double sigma = 0.0;
  std::uint64_t evaluations = 0;
};

/// x <- x - eta * estimate.
void zo_sgd_step(std::span<double> x, std::span<const double> estimate, double eta);

/// Adam on the estimate: m, v EMAs, bias-corrected with the post-increment t.
void zo_adam_step(AdamState& state, std::span<double> x, std::span<const double> estimate);

/// As zo_adam_step, but v tracks the (raw) first moment squared.
void radazo_step(AdamState& state, std::span<double> x, std::span<const double> estimate);

/// g = mean(projected); v <- beta v + (1-beta) g^2;
/// x <- x - eta / (sqrt(v_hat) + zeta) * (c/q) sum_i projected_i u_i,
/// with each u_i regenerated from (spec, step, i).
void meazo_step(MeazoState& state, std::span<double> x, std::span<const double> projected,
                const PerturbationSpec& spec, std::uint64_t step, std::size_t q);

/// Per-block MEAZO: block j is normalized by its own sqrt(v_hat_j) + zeta.
void grouped_meazo_step(GroupedMeazoState& state, std::span<double> x,
                        std::span<const double> projected, const PerturbationSpec& spec,
                        const Partition& partition, std::uint64_t step, std::size_t q);

/// One-sided FZOO step: f0 = f(x), f_i = f(x + eps u_i), sigma = population std
/// of {f_i}, x <- x - eta / (eps q sigma) * sum_i (f_i - f0) u_i. Directions come
/// from `spec` (its epsilon is ignored in favour of state.epsilon).
FzooStepResult fzoo_step(const ObjectiveFn& f, std::span<double> x, const FzooState& state,
                         const PerturbationSpec& spec, std::uint64_t step);

}  // namespace zo
