#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "zo/errors.hpp"

namespace zo {

class Partition;

/// Black-box scalar oracle, the only thing a ZO estimator is allowed to see.
using ObjectiveFn = std::function<double(std::span<const double>)>;

/// A deterministic objective with optional analytic oracles.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t dimension() const = 0;
  virtual double value(std::span<const double> x) const = 0;

  virtual bool has_gradient() const { return false; }
  /// Throws InvalidArgument when the objective has no gradient oracle.
  virtual Vector gradient(std::span<const double> x) const;

  /// Smoothness constant L, or NaN when unknown.
  virtual double smoothness() const;

  /// Block forwards one full evaluation costs (0 for non-layered objectives).
  virtual std::size_t blocks_per_evaluation() const { return 0; }

  /// Wraps value() as an ObjectiveFn; `*this` must outlive the result.
  ObjectiveFn as_function() const;
};

enum class Regime { kHeterogeneous, kHomogeneous };
Regime parse_regime(std::string_view tag);
std::string_view to_string(Regime regime);

/// Law of v in F_eps(x) = E[F(x + eps v)].
enum class SmoothingLaw { kBall, kSphere, kGaussian };
SmoothingLaw parse_smoothing_law(std::string_view tag);

/// E||v||^2 under the smoothing law in dimension d.
double smoothing_second_moment(SmoothingLaw law, std::size_t d);
/// E||v|| under the smoothing law in dimension d.
double smoothing_first_moment(SmoothingLaw law, std::size_t d);

/// F(x) = 1/2 x^T H x with H block diagonal: sqrt(d) blocks of size sqrt(d).
///
/// Block b has eigenvalues center_b * jitter_k with jitter spread linearly over
/// [0.9, 1.1] and an orthonormal eigenbasis drawn from the seed. Heterogeneous
/// centers are log-spaced over [1, 1000]; homogeneous centers all sit at
/// sqrt(1000). The minimum is F* = 0 at x = 0.
class BlockQuadratic final : public Objective {
 public:
  static BlockQuadratic make(std::size_t d, Regime regime, std::uint64_t seed);

  std::size_t dimension() const override { return dimension_; }
  double value(std::span<const double> x) const override;
  bool has_gradient() const override { return true; }
  Vector gradient(std::span<const double> x) const override;
  double smoothness() const override { return max_eigenvalue_; }

  std::size_t block_size() const { return block_size_; }
  std::size_t block_count() const { return block_size_; }
  Regime regime() const { return regime_; }
  const std::vector<double>& block_centers() const { return centers_; }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  double min_eigenvalue() const { return min_eigenvalue_; }
  double trace() const { return trace_; }
  double optimum_value() const { return 0.0; }

  /// Row-major block_size x block_size slice of H for block b.
  std::span<const double> hessian_block(std::size_t b) const;
  /// Dense d x d Hessian (row-major); meant for tests and small d.
  Vector dense_hessian() const;
  /// One partition block per Hessian block.
  Partition natural_partition() const;

  /// Closed form F(x) + (eps^2 / 2) tr(H) E||v||^2 / d.
  double smoothed_value(std::span<const double> x, double eps, SmoothingLaw law) const;
  /// Equals H x for every eps since the Hessian is constant.
  Vector smoothed_gradient(std::span<const double> x, double eps, SmoothingLaw law) const;

  /// A Gaussian direction from `seed`, rescaled so F(x0) = target_loss.
  Vector initial_point(double target_loss, std::uint64_t seed) const;

 private:
  BlockQuadratic() = default;

  std::size_t dimension_ = 0;
  std::size_t block_size_ = 0;
  Regime regime_ = Regime::kHeterogeneous;
  std::vector<double> centers_;
  std::vector<double> eigenvalues_;
  std::vector<double> blocks_;  // block_size_ row-major matrices, concatenated
  double max_eigenvalue_ = 0.0;
  double min_eigenvalue_ = 0.0;
  double trace_ = 0.0;
};

/// f(x; xi) = F(x) + tilt^T x with tilt ~ N(0, sigma^2 / d I) keyed by xi_seed,
/// so E[grad f] = grad F and E||grad f - grad F||^2 = sigma^2 exactly.
class NoisySample final : public Objective {
 public:
  NoisySample(std::shared_ptr<const Objective> base, double sigma, std::uint64_t xi_seed);

  std::size_t dimension() const override { return base_->dimension(); }
  double value(std::span<const double> x) const override;
  bool has_gradient() const override { return base_->has_gradient(); }
  Vector gradient(std::span<const double> x) const override;
  double smoothness() const override { return base_->smoothness(); }
  std::size_t blocks_per_evaluation() const override { return base_->blocks_per_evaluation(); }

  const Objective& base() const { return *base_; }
  const Vector& tilt() const { return tilt_; }
  double sigma() const { return sigma_; }

 private:
  std::shared_ptr<const Objective> base_;
  double sigma_;
  Vector tilt_;
};

NoisySample sample_noisy(std::shared_ptr<const Objective> base, double sigma,
                         std::uint64_t xi_seed);

/// Activation entering block `next_block` (0-based), plus a fingerprint of the
/// parameter slices that produced it.
struct ChainPrefix {
  std::size_t next_block = 0;
  Vector activation;
  std::uint64_t fingerprint = 0;
};

struct ChainEval {
  double loss = 0.0;
  /// Output of each forwarded block, in order.
  std::vector<Vector> activations;
  std::size_t blocks_forwarded = 0;
};

/// h_j = tanh(W_j h_{j-1} + b_j) for j = 1..p, loss = ||h_p - y||^2.
/// Parameters for block j are W_j (row-major, width x width) followed by b_j.
class LayeredChain final : public Objective {
 public:
  static LayeredChain make(std::size_t blocks, std::size_t width, std::uint64_t seed);

  std::size_t dimension() const override { return blocks_ * slice_size(); }
  double value(std::span<const double> x) const override;
  bool has_gradient() const override { return true; }
  Vector gradient(std::span<const double> x) const override;
  std::size_t blocks_per_evaluation() const override { return blocks_; }

  std::size_t block_count() const { return blocks_; }
  std::size_t width() const { return width_; }
  std::size_t slice_size() const { return width_ * width_ + width_; }
  std::size_t slice_offset(std::size_t block) const { return block * slice_size(); }
  const Vector& input() const { return input_; }
  const Vector& target() const { return target_; }

  /// One contiguous partition block per layer.
  Partition layer_partition() const;
  /// Small random weights drawn from the chain seed.
  Vector initial_point() const;

  /// Runs block `block` on `h_in` using its slice of x.
  Vector forward_block(std::size_t block, std::span<const double> h_in,
                       std::span<const double> x) const;
  double terminal_loss(std::span<const double> h_last) const;

  /// Full pass, or a suffix pass from `prefix`. Throws InvalidArgument when the
  /// prefix was produced under different leading parameter slices.
  ChainEval evaluate(std::span<const double> x, const ChainPrefix* prefix = nullptr) const;

  /// Prefix entering `next_block` with the given activation under parameters x.
  ChainPrefix make_prefix(std::span<const double> x, std::size_t next_block,
                          Vector activation) const;

  std::uint64_t prefix_fingerprint(std::span<const double> x, std::size_t next_block) const;

 private:
  LayeredChain() = default;

  std::size_t blocks_ = 0;
  std::size_t width_ = 0;
  std::uint64_t seed_ = 0;
  Vector input_;
  Vector target_;
};

}  // namespace zo
