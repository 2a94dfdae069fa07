#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "zo/errors.hpp"
#include "zo/objectives.hpp"
#include "zo/perturb.hpp"

namespace zo {

/// E[g_hat^2] elementwise in the eps -> 0 limit.
/// Gaussian: (1/q)(||g||^2 1 + g^2) + g^2.
/// Uniform sphere: d(||g||^2 1 + 2 g^2) / (q(d+2)) + ((q-1)/q) g^2.
/// Other distributions have no closed form here and throw InvalidArgument.
Vector predicted_squared_moment(std::span<const double> g, std::size_t q,
                                Distribution distribution);

struct MomentReport {
  Vector empirical;
  Vector predicted;
  /// Standard error of each empirical mean.
  Vector standard_error;
  double max_rel_err = 0.0;
  /// max_k |empirical_k - predicted_k| / standard_error_k.
  double max_z = 0.0;
  std::size_t n_trials = 0;

  /// Every coordinate within k standard errors (exact match when se is 0).
  bool within(double k) const;
};

/// Runs N independent q-sample estimators on f(x) = g^T x and averages g_hat^2.
/// Central differences are exact on an affine function, so this is the
/// eps -> 0 regime without truncation error. Requires N >= 10^4.
MomentReport mc_squared_moment(std::span<const double> g, std::size_t q,
                               Distribution distribution, std::size_t n_trials,
                               std::uint64_t seed = 0);

/// True when the coordinate-free term ||g||^2 / q of the Gaussian formula
/// exceeds every coordinate-dependent term (1/q + 1) g_k^2.
bool bias_dominates(std::span<const double> g, std::size_t q);

struct VtStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  /// Population standard deviation.
  double std = 0.0;
  /// Excess kurtosis; 0 for a constant vector.
  double kurtosis = 0.0;
};

VtStats vt_statistics(std::span<const double> v);

struct CollapsePoint {
  /// (max - min) / mean of v; 0 when the mean is 0.
  double spread = 0.0;
  /// mean_k |v_k - target| / target with target = ||grad f||^2 / q.
  double theory_target_err = 0.0;
};

/// One point per trace entry. grad_norm_sq[t] is ||grad f(x_t)||^2; an empty
/// or mismatched series means no gradient oracle and throws InvalidArgument.
std::vector<CollapsePoint> vt_collapse_metric(std::span<const Vector> v_trace,
                                              std::span<const double> grad_norm_sq,
                                              std::size_t q);

struct MeazoConditionTerms {
  double variance_term = 0.0;  // G (1 + sigma1^2) sqrt(1 - beta) / zeta
  double step_term = 0.0;      // L eta / (2 zeta)
};

MeazoConditionTerms meazo_condition_terms(double G, double L, double sigma1_sq, double beta,
                                          double eta, double zeta);

/// max{variance_term, step_term} <= 1/4, with a 1e-12 relative allowance so
/// parameters solved for equality land inside. Throws InvalidArgument when an
/// argument is non-positive or beta is outside (0, 1).
bool check_meazo_condition(double G, double L, double sigma1_sq, double beta, double eta,
                           double zeta);

struct TheoremConstants {
  double sigma0_sq = 0.0;
  double sigma1_sq = 0.0;
  double G = 0.0;
  double L = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double zeta = 0.0;
};

/// sigma0^2 = d eps^2 L^2 (8 + d) / (2q) + ((2d - 1)/q + 1) sigma^2,
/// sigma1^2 = (4d - 1)/q, alpha = sqrt(beta) G + zeta.
TheoremConstants theorem_constants(std::size_t d, std::size_t q, double eps, double L,
                                   double sigma, double G, double beta, double zeta);

/// 2 alpha [D / (eta T) + sigma0^2 / (2 zeta)] + eps^2 L^2 (alpha / (eta T) + 2)
/// with D = F(x0) - F*. Throws PreconditionError when the step-size condition fails.
double meazo_bound(const TheoremConstants& constants, double f0_minus_fstar, double eta,
                   double T, double eps, double L);

/// D / (eta T (1 - L eta (1 + s1)/2)) + L eta s0 / (2 - L eta (1 + s1))
///   + eps^2 L^2 (1 / (2 L T eta (1 - L eta (1 + s1)/2)) + 2),
/// with s0, s1 from theorem_constants. Requires eta < 2 / ((1 + s1) L).
double zosgd_bound(std::size_t d, double q, double eps, double L, double sigma, double eta,
                   double T, double f0_minus_fstar);

/// D / (eta T (1 - L eta / 2)) + L eta sigma^2 / (2 - L eta). Requires eta < 2 / L.
double classical_sgd_bound(double L, double sigma, double eta, double T, double f0_minus_fstar);

struct SmoothingReport {
  std::size_t points = 0;
  /// min over points of (bound - |F_eps - F|).
  double function_slack = 0.0;
  /// min over points of (bound - ||grad F_eps - grad F||).
  double gradient_slack = 0.0;
  double max_function_error = 0.0;
  double max_gradient_error = 0.0;

  bool holds() const { return function_slack >= 0.0 && gradient_slack >= 0.0; }
};

/// |F_eps - F| <= (eps^2 / 2) L E||v||^2 and ||grad F_eps - grad F|| <= eps L E||v||
/// at each point, using the quadratic's closed forms.
SmoothingReport check_smoothing_inequalities(const BlockQuadratic& quad, double eps,
                                             SmoothingLaw law, std::span<const Vector> points);

}  // namespace zo
