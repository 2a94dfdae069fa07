#include "zo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "zo/estimators.hpp"

namespace zo {
namespace {

double squared_norm(std::span<const double> v) {
  double total = 0.0;
  for (double value : v) total += value * value;
  return total;
}

void require_positive(double value, const char* name) {
  if (!(std::isfinite(value) && value > 0.0)) {
    throw InvalidArgument(std::string(name) + " must be finite and > 0");
  }
}

}  // namespace

Vector predicted_squared_moment(std::span<const double> g, std::size_t q,
                                Distribution distribution) {
  if (q == 0) throw InvalidArgument("q must be >= 1");
  if (g.empty()) throw InvalidArgument("gradient must be non-empty");
  const double d = static_cast<double>(g.size());
  const double qd = static_cast<double>(q);
  const double norm_sq = squared_norm(g);
  Vector out(g.size());
  switch (distribution) {
    case Distribution::kGaussian:
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double gk2 = g[k] * g[k];
        out[k] = (norm_sq + gk2) / qd + gk2;
      }
      return out;
    case Distribution::kUniformSphere:
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double gk2 = g[k] * g[k];
        out[k] = d * (norm_sq + 2.0 * gk2) / (qd * (d + 2.0)) + (qd - 1.0) / qd * gk2;
      }
      return out;
    default:
      throw InvalidArgument("no closed-form squared moment for distribution '" +
                            std::string(to_string(distribution)) + "'");
  }
}

bool MomentReport::within(double k) const {
  for (std::size_t i = 0; i < empirical.size(); ++i) {
    const double diff = std::abs(empirical[i] - predicted[i]);
    const double allowance = k * standard_error[i];
    const double floor = 1e-12 * std::max(1.0, std::abs(predicted[i]));
    if (diff > std::max(allowance, floor)) return false;
  }
  return true;
}

MomentReport mc_squared_moment(std::span<const double> g, std::size_t q,
                               Distribution distribution, std::size_t n_trials,
                               std::uint64_t seed) {
  if (n_trials < 10000) throw InvalidArgument("Monte Carlo needs N >= 10^4 trials");
  MomentReport report;
  report.predicted = predicted_squared_moment(g, q, distribution);
  report.n_trials = n_trials;

  const std::size_t d = g.size();
  const Vector slope(g.begin(), g.end());
  const ObjectiveFn affine = [&slope](std::span<const double> x) {
    double total = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) total += slope[k] * x[k];
    return total;
  };
  const Vector origin(d, 0.0);
  // eps = 1 is exact on an affine function and keeps rounding small.
  const PerturbationSpec spec{distribution, 1.0, seed};

  Vector sum(d, 0.0);
  Vector sum_sq(d, 0.0);
  for (std::size_t n = 0; n < n_trials; ++n) {
    const ZoEstimate estimate = zo_gradient(affine, origin, spec, q, n);
    for (std::size_t k = 0; k < d; ++k) {
      const double sq = estimate.gradient[k] * estimate.gradient[k];
      sum[k] += sq;
      sum_sq[k] += sq * sq;
    }
  }

  const double n = static_cast<double>(n_trials);
  report.empirical.resize(d);
  report.standard_error.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double mean = sum[k] / n;
    const double variance = std::max(0.0, (sum_sq[k] - n * mean * mean) / (n - 1.0));
    report.empirical[k] = mean;
    report.standard_error[k] = std::sqrt(variance / n);
    const double diff = std::abs(mean - report.predicted[k]);
    const double rel = report.predicted[k] > 0.0 ? diff / report.predicted[k] : diff;
    report.max_rel_err = std::max(report.max_rel_err, rel);
    if (report.standard_error[k] > 0.0) {
      report.max_z = std::max(report.max_z, diff / report.standard_error[k]);
    }
  }
  return report;
}

bool bias_dominates(std::span<const double> g, std::size_t q) {
  if (q == 0) throw InvalidArgument("q must be >= 1");
  const double qd = static_cast<double>(q);
  const double common = squared_norm(g) / qd;
  for (double gk : g) {
    if (!(common > (1.0 / qd + 1.0) * gk * gk)) return false;
  }
  return true;
}

VtStats vt_statistics(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("statistics need a non-empty vector");
  VtStats stats;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  stats.min = *lo;
  stats.max = *hi;
  const double n = static_cast<double>(v.size());
  double total = 0.0;
  for (double value : v) total += value;
  stats.mean = total / n;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double value : v) {
    const double c = value - stats.mean;
    m2 += c * c;
    m4 += c * c * c * c;
  }
  m2 /= n;
  m4 /= n;
  stats.std = std::sqrt(m2);
  stats.kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
  return stats;
}

std::vector<CollapsePoint> vt_collapse_metric(std::span<const Vector> v_trace,
                                              std::span<const double> grad_norm_sq,
                                              std::size_t q) {
  if (q == 0) throw InvalidArgument("q must be >= 1");
  if (grad_norm_sq.empty() || grad_norm_sq.size() != v_trace.size()) {
    throw InvalidArgument("collapse metric needs a gradient norm for every trace entry");
  }
  std::vector<CollapsePoint> out;
  out.reserve(v_trace.size());
  for (std::size_t t = 0; t < v_trace.size(); ++t) {
    const VtStats stats = vt_statistics(v_trace[t]);
    CollapsePoint point;
    point.spread = stats.mean != 0.0 ? (stats.max - stats.min) / stats.mean : 0.0;
    const double target = grad_norm_sq[t] / static_cast<double>(q);
    double err = 0.0;
    for (double value : v_trace[t]) err += std::abs(value - target);
    err /= static_cast<double>(v_trace[t].size());
    point.theory_target_err =
        target > 0.0 ? err / target : std::numeric_limits<double>::infinity();
    out.push_back(point);
  }
  return out;
}

MeazoConditionTerms meazo_condition_terms(double G, double L, double sigma1_sq, double beta,
                                          double eta, double zeta) {
  require_positive(G, "G");
  require_positive(L, "L");
  require_positive(eta, "eta");
  require_positive(zeta, "zeta");
  if (!(sigma1_sq >= 0.0)) throw InvalidArgument("sigma1^2 must be >= 0");
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in (0, 1)");
  return {G * (1.0 + sigma1_sq) * std::sqrt(1.0 - beta) / zeta, L * eta / (2.0 * zeta)};
}

bool check_meazo_condition(double G, double L, double sigma1_sq, double beta, double eta,
                           double zeta) {
  const MeazoConditionTerms terms = meazo_condition_terms(G, L, sigma1_sq, beta, eta, zeta);
  constexpr double kLimit = 0.25 * (1.0 + 1e-12);
  return std::max(terms.variance_term, terms.step_term) <= kLimit;
}

TheoremConstants theorem_constants(std::size_t d, std::size_t q, double eps, double L,
                                   double sigma, double G, double beta, double zeta) {
  if (d == 0 || q == 0) throw InvalidArgument("d and q must be >= 1");
  const double dd = static_cast<double>(d);
  const double qd = static_cast<double>(q);
  TheoremConstants c;
  c.sigma0_sq = dd * eps * eps * L * L * (8.0 + dd) / (2.0 * qd) +
                ((2.0 * dd - 1.0) / qd + 1.0) * sigma * sigma;
  c.sigma1_sq = (4.0 * dd - 1.0) / qd;
  c.G = G;
  c.L = L;
  c.beta = beta;
  c.zeta = zeta;
  c.alpha = std::sqrt(beta) * G + zeta;
  return c;
}

double meazo_bound(const TheoremConstants& c, double f0_minus_fstar, double eta, double T,
                   double eps, double L) {
  if (!check_meazo_condition(c.G, L, c.sigma1_sq, c.beta, eta, c.zeta)) {
    throw PreconditionError("MEAZO step-size condition is violated");
  }
  require_positive(T, "T");
  const double eta_t = eta * T;
  return 2.0 * c.alpha * (f0_minus_fstar / eta_t + c.sigma0_sq / (2.0 * c.zeta)) +
         eps * eps * L * L * (c.alpha / eta_t + 2.0);
}

double zosgd_bound(std::size_t d, double q, double eps, double L, double sigma, double eta,
                   double T, double f0_minus_fstar) {
  if (d == 0 || !(q >= 1.0)) throw InvalidArgument("d and q must be >= 1");
  require_positive(L, "L");
  require_positive(eta, "eta");
  require_positive(T, "T");
  const double dd = static_cast<double>(d);
  // q may be huge for the classical limit, so it stays a double here.
  const double s0 =
      dd * eps * eps * L * L * (8.0 + dd) / (2.0 * q) + ((2.0 * dd - 1.0) / q + 1.0) * sigma * sigma;
  const double s1 = (4.0 * dd - 1.0) / q;
  if (!(eta < 2.0 / ((1.0 + s1) * L))) {
    throw PreconditionError("ZO-SGD step size must satisfy eta < 2 / ((1 + sigma1^2) L)");
  }
  const double shrink = 1.0 - L * eta * (1.0 + s1) / 2.0;
  return f0_minus_fstar / (eta * T * shrink) + L * eta * s0 / (2.0 - L * eta * (1.0 + s1)) +
         eps * eps * L * L * (1.0 / (2.0 * L * T * eta * shrink) + 2.0);
}

double classical_sgd_bound(double L, double sigma, double eta, double T, double f0_minus_fstar) {
  require_positive(L, "L");
  require_positive(eta, "eta");
  require_positive(T, "T");
  if (!(eta < 2.0 / L)) throw PreconditionError("SGD step size must satisfy eta < 2 / L");
  return f0_minus_fstar / (eta * T * (1.0 - L * eta / 2.0)) +
         L * eta * sigma * sigma / (2.0 - L * eta);
}

SmoothingReport check_smoothing_inequalities(const BlockQuadratic& quad, double eps,
                                             SmoothingLaw law, std::span<const Vector> points) {
  if (!(eps >= 0.0)) throw InvalidArgument("eps must be >= 0");
  const std::size_t d = quad.dimension();
  const double L = quad.smoothness();
  const double function_bound = 0.5 * eps * eps * L * smoothing_second_moment(law, d);
  const double gradient_bound = eps * L * smoothing_first_moment(law, d);

  SmoothingReport report;
  report.points = points.size();
  report.function_slack = std::numeric_limits<double>::infinity();
  report.gradient_slack = std::numeric_limits<double>::infinity();
  for (const Vector& x : points) {
    const double f_err = std::abs(quad.smoothed_value(x, eps, law) - quad.value(x));
    const Vector g_eps = quad.smoothed_gradient(x, eps, law);
    const Vector g = quad.gradient(x);
    double g_err_sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) g_err_sq += (g_eps[k] - g[k]) * (g_eps[k] - g[k]);
    const double g_err = std::sqrt(g_err_sq);
    report.max_function_error = std::max(report.max_function_error, f_err);
    report.max_gradient_error = std::max(report.max_gradient_error, g_err);
    report.function_slack = std::min(report.function_slack, function_bound - f_err);
    report.gradient_slack = std::min(report.gradient_slack, gradient_bound - g_err);
  }
  return report;
}

}  // namespace zo
