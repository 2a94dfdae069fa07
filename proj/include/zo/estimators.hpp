#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "zo/errors.hpp"
#include "zo/objectives.hpp"
#include "zo/perturb.hpp"

namespace zo {

/// Disjoint coordinate blocks covering {0, ..., d-1}.
class Partition {
 public:
  /// Validates disjointness and coverage; throws InvalidArgument otherwise.
  Partition(std::size_t dimension, std::vector<std::vector<std::size_t>> blocks);

  static Partition single(std::size_t dimension);
  /// Consecutive blocks of the given sizes.
  static Partition contiguous(std::span<const std::size_t> sizes);
  /// Half-open index ranges [begin, end); must tile [0, d).
  static Partition from_ranges(std::size_t dimension,
                               std::span<const std::pair<std::size_t, std::size_t>> ranges);

  std::size_t dimension() const { return dimension_; }
  std::size_t block_count() const { return blocks_.size(); }
  std::span<const std::size_t> block(std::size_t j) const { return blocks_.at(j); }
  std::size_t block_size(std::size_t j) const { return blocks_.at(j).size(); }
  /// Binary mask m_j.
  Vector mask(std::size_t j) const;

  bool operator==(const Partition& other) const = default;

 private:
  std::size_t dimension_;
  std::vector<std::vector<std::size_t>> blocks_;
};

struct EvalCounter {
  std::uint64_t block_forward_calls = 0;
  std::uint64_t full_forward_calls = 0;
};

/// Output of every estimator.
struct ZoEstimate {
  Vector gradient;
  /// Projected gradients, sample-major: projected[i * blocks + j].
  std::vector<double> projected;
  std::size_t blocks = 1;
  std::uint64_t evaluations = 0;
};

/// (f(x + eps u) - f(x - eps u)) / (2 eps). Throws NumericFailure carrying the
/// offending point when either value is non-finite.
double projected_gradient(const ObjectiveFn& f, std::span<const double> x,
                          std::span<const double> u, double eps);

/// The q projected gradients only (2q evaluations); directions stay implicit.
std::vector<double> zo_projected(const ObjectiveFn& f, std::span<const double> x,
                                 const PerturbationSpec& spec, std::size_t q,
                                 std::uint64_t step);

/// (c / q) sum_i Delta_i u_i with c = d for the unit sphere and 1 otherwise.
ZoEstimate zo_gradient(const ObjectiveFn& f, std::span<const double> x,
                       const PerturbationSpec& spec, std::size_t q, std::uint64_t step);

/// Per-block projected gradients (2qp evaluations), sample-major.
std::vector<double> grouped_projected(const ObjectiveFn& f, std::span<const double> x,
                                      const PerturbationSpec& spec, std::size_t q,
                                      const Partition& partition, std::uint64_t step);

/// (1/q) sum_i sum_j c_j Delta_ij (m_j . u_ij), with c_j = |X_j| for the unit
/// sphere and 1 otherwise. Block j of sample i is keyed (step, i, j).
ZoEstimate grouped_zo_gradient(const ObjectiveFn& f, std::span<const double> x,
                               const PerturbationSpec& spec, std::size_t q,
                               const Partition& partition, std::uint64_t step);

struct EfficientGroupedResult {
  ZoEstimate estimate;
  EvalCounter counter;
};

/// Grouped estimate over the layer partition of a LayeredChain, forwarding
/// each perturbed query from the cached unperturbed prefix. Uses exactly
/// pq(p+1) + p - 1 block forwards. Throws InvalidArgument for other objectives.
EfficientGroupedResult efficient_grouped_eval(const Objective& objective,
                                              std::span<const double> x,
                                              const PerturbationSpec& spec, std::size_t q,
                                              std::uint64_t step);

/// Block forwards used by efficient_grouped_eval.
constexpr std::uint64_t efficient_grouped_forwards(std::uint64_t p, std::uint64_t q) {
  return p * q * (p + 1) + p - 1;
}

/// Adds sum_i sum_j coefficient[j] * projected[i*p + j] * (m_j . u_ij) into out,
/// regenerating every direction from its replay key. Shared by all estimators
/// and the replay-based optimizer steps, so their arithmetic is identical.
void accumulate_replayed(std::span<double> out, std::span<const double> projected,
                         const PerturbationSpec& spec, std::size_t q,
                         const Partition& partition, std::uint64_t step,
                         std::span<const double> block_coefficients);

}  // namespace zo
