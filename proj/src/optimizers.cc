#include "zo/optimizers.hpp"

#include <cmath>
#include <string>

namespace zo {
namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (double value : values) {
    if (!std::isfinite(value)) throw NumericFailure(std::string(what) + " is non-finite");
  }
}

void require_same_size(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("estimate and parameter dimensions differ");
}

double bias_correction(double beta, std::uint64_t t) {
  return 1.0 - std::pow(beta, static_cast<double>(t));
}

enum class SecondMomentSource { kEstimate, kFirstMoment };

void adam_like_step(AdamState& state, std::span<double> x, std::span<const double> estimate,
                    SecondMomentSource source) {
  require_same_size(x, estimate);
  require_finite(estimate, "gradient estimate");
  if (state.m.size() != x.size() || state.v.size() != x.size()) {
    throw InvalidArgument("Adam state dimension does not match the parameters");
  }
  ++state.t;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = bias_correction(b1, state.t);
  const double c2 = bias_correction(b2, state.t);
  for (std::size_t k = 0; k < x.size(); ++k) {
    state.m[k] = b1 * state.m[k] + (1.0 - b1) * estimate[k];
    const double tracked = source == SecondMomentSource::kEstimate ? estimate[k] : state.m[k];
    state.v[k] = b2 * state.v[k] + (1.0 - b2) * tracked * tracked;
    const double m_hat = b1 == 0.0 ? state.m[k] : state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    x[k] -= state.eta * m_hat / (std::sqrt(v_hat) + state.zeta);
  }
}

}  // namespace

double MeazoState::corrected() const {
  return t == 0 ? 0.0 : v / bias_correction(beta, t);
}

GroupedMeazoState GroupedMeazoState::zeros(std::size_t blocks, double eta, double beta,
                                           double zeta) {
  GroupedMeazoState state;
  state.v.assign(blocks, 0.0);
  state.eta = eta;
  state.beta = beta;
  state.zeta = zeta;
  return state;
}

std::vector<double> GroupedMeazoState::corrected() const {
  std::vector<double> out(v.size(), 0.0);
  if (t == 0) return out;
  const double c = bias_correction(beta, t);
  for (std::size_t j = 0; j < v.size(); ++j) out[j] = v[j] / c;
  return out;
}

AdamState AdamState::zeros(std::size_t d, double eta, double beta1, double beta2, double zeta) {
  if (d == 0) throw InvalidArgument("Adam state dimension must be >= 1");
  AdamState state;
  state.m.assign(d, 0.0);
  state.v.assign(d, 0.0);
  state.eta = eta;
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.zeta = zeta;
  return state;
}

Vector AdamState::corrected_v() const {
  Vector out(v.size(), 0.0);
  if (t == 0) return out;
  const double c = bias_correction(beta2, t);
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k] / c;
  return out;
}

void zo_sgd_step(std::span<double> x, std::span<const double> estimate, double eta) {
  require_same_size(x, estimate);
  require_finite(estimate, "gradient estimate");
  for (std::size_t k = 0; k < x.size(); ++k) x[k] -= eta * estimate[k];
}

void zo_adam_step(AdamState& state, std::span<double> x, std::span<const double> estimate) {
  adam_like_step(state, x, estimate, SecondMomentSource::kEstimate);
}

void radazo_step(AdamState& state, std::span<double> x, std::span<const double> estimate) {
  adam_like_step(state, x, estimate, SecondMomentSource::kFirstMoment);
}

void meazo_step(MeazoState& state, std::span<double> x, std::span<const double> projected,
                const PerturbationSpec& spec, std::uint64_t step, std::size_t q) {
  if (q == 0 || projected.size() != q) throw InvalidArgument("expected q projected gradients");
  require_finite(projected, "projected gradient");
  double g = 0.0;
  for (double delta : projected) g += delta;
  g /= static_cast<double>(q);

  ++state.t;
  state.v = state.beta * state.v + (1.0 - state.beta) * g * g;
  const double normalizer = state.eta / (std::sqrt(state.corrected()) + state.zeta);

  const double coefficient =
      -normalizer * estimator_scale(spec.distribution, x.size()) / static_cast<double>(q);
  const Partition whole = Partition::single(x.size());
  accumulate_replayed(x, projected, spec, q, whole, step, std::span<const double>(&coefficient, 1));
}

void grouped_meazo_step(GroupedMeazoState& state, std::span<double> x,
                        std::span<const double> projected, const PerturbationSpec& spec,
                        const Partition& partition, std::uint64_t step, std::size_t q) {
  const std::size_t p = partition.block_count();
  if (partition.dimension() != x.size()) {
    throw InvalidArgument("partition dimension does not match the parameters");
  }
  if (state.v.size() != p) throw InvalidArgument("grouped MEAZO state has the wrong block count");
  if (q == 0 || projected.size() != q * p) {
    throw InvalidArgument("expected q * p projected gradients");
  }
  require_finite(projected, "projected gradient");

  ++state.t;
  const double c = bias_correction(state.beta, state.t);
  std::vector<double> coefficients(p);
  for (std::size_t j = 0; j < p; ++j) {
    double g = 0.0;
    for (std::size_t i = 0; i < q; ++i) g += projected[i * p + j];
    g /= static_cast<double>(q);
    state.v[j] = state.beta * state.v[j] + (1.0 - state.beta) * g * g;
    const double normalizer = state.eta / (std::sqrt(state.v[j] / c) + state.zeta);
    coefficients[j] = -normalizer * estimator_scale(spec.distribution, partition.block_size(j)) /
                      static_cast<double>(q);
  }
  accumulate_replayed(x, projected, spec, q, partition, step, coefficients);
}

FzooStepResult fzoo_step(const ObjectiveFn& f, std::span<double> x, const FzooState& state,
                         const PerturbationSpec& spec, std::uint64_t step) {
  if (state.q < 2) throw InvalidArgument("FZOO needs q >= 2");
  if (!(state.epsilon > 0.0)) throw InvalidArgument("FZOO epsilon must be > 0");
  if (x.empty()) throw InvalidArgument("parameter dimension must be >= 1");
  const std::size_t q = state.q;
  const std::size_t d = x.size();

  auto checked = [&](std::span<const double> point) {
    const double value = f(point);
    if (!std::isfinite(value)) {
      throw NumericFailure("objective returned a non-finite value",
                           Vector(point.begin(), point.end()));
    }
    return value;
  };

  const double f0 = checked(x);
  std::vector<double> losses(q);
  Vector u(d);
  Vector shifted(d);
  for (std::size_t i = 0; i < q; ++i) {
    sample_direction_into(spec, {step, i, 0}, u);
    for (std::size_t k = 0; k < d; ++k) shifted[k] = x[k] + state.epsilon * u[k];
    losses[i] = checked(shifted);
  }

  double mean = 0.0;
  for (double value : losses) mean += value;
  mean /= static_cast<double>(q);
  double variance = 0.0;
  for (double value : losses) variance += (value - mean) * (value - mean);
  variance /= static_cast<double>(q);
  const double sigma = std::sqrt(variance);
  if (!(sigma > 0.0)) throw DegenerateScale("FZOO: perturbed losses have zero spread");

  const double coefficient = -state.eta / (state.epsilon * static_cast<double>(q) * sigma);
  for (std::size_t i = 0; i < q; ++i) {
    sample_direction_into(spec, {step, i, 0}, u);
    const double weight = coefficient * (losses[i] - f0);
    for (std::size_t k = 0; k < d; ++k) x[k] += weight * u[k];
  }
  return {sigma, q + 1};
}

}  // namespace zo
