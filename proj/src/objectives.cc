#include "zo/objectives.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "zo/estimators.hpp"
#include "zo/perturb.hpp"

namespace zo {

Vector Objective::gradient(std::span<const double>) const {
  throw InvalidArgument("objective has no gradient oracle");
}

double Objective::smoothness() const { return std::numeric_limits<double>::quiet_NaN(); }

ObjectiveFn Objective::as_function() const {
  return [this](std::span<const double> x) { return value(x); };
}

Regime parse_regime(std::string_view tag) {
  if (tag == "heterogeneous") return Regime::kHeterogeneous;
  if (tag == "homogeneous") return Regime::kHomogeneous;
  throw InvalidArgument("unknown quadratic regime '" + std::string(tag) + "'");
}

std::string_view to_string(Regime regime) {
  return regime == Regime::kHeterogeneous ? "heterogeneous" : "homogeneous";
}

SmoothingLaw parse_smoothing_law(std::string_view tag) {
  if (tag == "ball") return SmoothingLaw::kBall;
  if (tag == "sphere") return SmoothingLaw::kSphere;
  if (tag == "gaussian") return SmoothingLaw::kGaussian;
  throw InvalidArgument("unsupported smoothing law '" + std::string(tag) + "'");
}

double smoothing_second_moment(SmoothingLaw law, std::size_t d) {
  const double dd = static_cast<double>(d);
  switch (law) {
    case SmoothingLaw::kBall:
      return dd / (dd + 2.0);
    case SmoothingLaw::kSphere:
      return 1.0;
    case SmoothingLaw::kGaussian:
      return dd;
  }
  throw InvalidArgument("unsupported smoothing law");
}

double smoothing_first_moment(SmoothingLaw law, std::size_t d) {
  const double dd = static_cast<double>(d);
  switch (law) {
    case SmoothingLaw::kBall:
      return dd / (dd + 1.0);
    case SmoothingLaw::kSphere:
      return 1.0;
    case SmoothingLaw::kGaussian:
      // sqrt(2) Gamma((d+1)/2) / Gamma(d/2)
      return std::sqrt(2.0) * std::exp(std::lgamma((dd + 1.0) / 2.0) - std::lgamma(dd / 2.0));
  }
  throw InvalidArgument("unsupported smoothing law");
}

// ---------------------------------------------------------------------------
// BlockQuadratic

BlockQuadratic BlockQuadratic::make(std::size_t d, Regime regime, std::uint64_t seed) {
  if (d == 0) throw InvalidArgument("quadratic dimension must be >= 1");
  const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
  if (s * s != d) {
    throw InvalidArgument("quadratic dimension " + std::to_string(d) + " is not a perfect square");
  }

  BlockQuadratic q;
  q.dimension_ = d;
  q.block_size_ = s;
  q.regime_ = regime;
  q.centers_.resize(s);
  for (std::size_t b = 0; b < s; ++b) {
    if (regime == Regime::kHomogeneous) {
      q.centers_[b] = std::sqrt(1000.0);
    } else {
      const double fraction = s == 1 ? 0.0 : static_cast<double>(b) / static_cast<double>(s - 1);
      q.centers_[b] = std::pow(10.0, 3.0 * fraction);
    }
  }

  q.blocks_.assign(s * s * s, 0.0);
  q.eigenvalues_.reserve(d);
  for (std::size_t b = 0; b < s; ++b) {
    CounterRng rng(combine_key(mix64(seed ^ 0x71c0ffee15badd5eULL), b));
    Eigen::MatrixXd gaussian(s, s);
    for (std::size_t r = 0; r < s; ++r) {
      for (std::size_t c = 0; c < s; ++c) gaussian(r, c) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
    Eigen::MatrixXd basis = qr.householderQ();
    Eigen::VectorXd spectrum(s);
    for (std::size_t k = 0; k < s; ++k) {
      const double jitter =
          s == 1 ? 1.0 : 0.9 + 0.2 * static_cast<double>(k) / static_cast<double>(s - 1);
      spectrum(k) = q.centers_[b] * jitter;
      q.eigenvalues_.push_back(spectrum(k));
    }
    Eigen::MatrixXd block = basis * spectrum.asDiagonal() * basis.transpose();
    const Eigen::MatrixXd symmetric = 0.5 * (block + block.transpose()).eval();
    block = symmetric;
    for (std::size_t r = 0; r < s; ++r) {
      for (std::size_t c = 0; c < s; ++c) q.blocks_[b * s * s + r * s + c] = block(r, c);
    }
  }
  q.max_eigenvalue_ = *std::max_element(q.eigenvalues_.begin(), q.eigenvalues_.end());
  q.min_eigenvalue_ = *std::min_element(q.eigenvalues_.begin(), q.eigenvalues_.end());
  q.trace_ = 0.0;
  for (double lambda : q.eigenvalues_) q.trace_ += lambda;
  return q;
}

std::span<const double> BlockQuadratic::hessian_block(std::size_t b) const {
  if (b >= block_size_) throw InvalidArgument("hessian block index out of range");
  const std::size_t area = block_size_ * block_size_;
  return std::span<const double>(blocks_).subspan(b * area, area);
}

Vector BlockQuadratic::dense_hessian() const {
  const std::size_t s = block_size_;
  Vector dense(dimension_ * dimension_, 0.0);
  for (std::size_t b = 0; b < s; ++b) {
    const auto block = hessian_block(b);
    for (std::size_t r = 0; r < s; ++r) {
      for (std::size_t c = 0; c < s; ++c) {
        dense[(b * s + r) * dimension_ + b * s + c] = block[r * s + c];
      }
    }
  }
  return dense;
}

double BlockQuadratic::value(std::span<const double> x) const {
  if (x.size() != dimension_) throw InvalidArgument("quadratic: dimension mismatch");
  const std::size_t s = block_size_;
  double total = 0.0;
  for (std::size_t b = 0; b < s; ++b) {
    const double* h = blocks_.data() + b * s * s;
    const double* xb = x.data() + b * s;
    for (std::size_t r = 0; r < s; ++r) {
      double row = 0.0;
      for (std::size_t c = 0; c < s; ++c) row += h[r * s + c] * xb[c];
      total += xb[r] * row;
    }
  }
  return 0.5 * total;
}

Vector BlockQuadratic::gradient(std::span<const double> x) const {
  if (x.size() != dimension_) throw InvalidArgument("quadratic: dimension mismatch");
  const std::size_t s = block_size_;
  Vector g(dimension_, 0.0);
  for (std::size_t b = 0; b < s; ++b) {
    const double* h = blocks_.data() + b * s * s;
    const double* xb = x.data() + b * s;
    for (std::size_t r = 0; r < s; ++r) {
      double row = 0.0;
      for (std::size_t c = 0; c < s; ++c) row += h[r * s + c] * xb[c];
      g[b * s + r] = row;
    }
  }
  return g;
}

Partition BlockQuadratic::natural_partition() const {
  std::vector<std::size_t> sizes(block_size_, block_size_);
  return Partition::contiguous(sizes);
}

double BlockQuadratic::smoothed_value(std::span<const double> x, double eps,
                                      SmoothingLaw law) const {
  if (eps < 0.0) throw InvalidArgument("smoothing radius must be >= 0");
  const double per_coordinate =
      smoothing_second_moment(law, dimension_) / static_cast<double>(dimension_);
  return value(x) + 0.5 * eps * eps * trace_ * per_coordinate;
}

Vector BlockQuadratic::smoothed_gradient(std::span<const double> x, double eps,
                                         SmoothingLaw law) const {
  if (eps < 0.0) throw InvalidArgument("smoothing radius must be >= 0");
  (void)law;
  return gradient(x);
}

Vector BlockQuadratic::initial_point(double target_loss, std::uint64_t seed) const {
  if (!(target_loss > 0.0)) throw InvalidArgument("initial loss must be > 0");
  CounterRng rng(combine_key(mix64(seed ^ 0x1a17a1b0a7ULL), dimension_));
  Vector x(dimension_);
  for (double& value : x) value = rng.normal();
  const double scale = std::sqrt(target_loss / value(x));
  for (double& value : x) value *= scale;
  return x;
}

// ---------------------------------------------------------------------------
// NoisySample

NoisySample::NoisySample(std::shared_ptr<const Objective> base, double sigma,
                         std::uint64_t xi_seed)
    : base_(std::move(base)), sigma_(sigma) {
  if (!base_) throw InvalidArgument("noisy sample needs a base objective");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be >= 0");
  const std::size_t d = base_->dimension();
  tilt_.assign(d, 0.0);
  if (sigma > 0.0) {
    CounterRng rng(combine_key(mix64(xi_seed ^ 0x0b5e55ed015eULL), d));
    const double scale = sigma / std::sqrt(static_cast<double>(d));
    for (double& value : tilt_) value = scale * rng.normal();
  }
}

double NoisySample::value(std::span<const double> x) const {
  double tilt_term = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) tilt_term += tilt_[k] * x[k];
  return base_->value(x) + tilt_term;
}

Vector NoisySample::gradient(std::span<const double> x) const {
  Vector g = base_->gradient(x);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] += tilt_[k];
  return g;
}

NoisySample sample_noisy(std::shared_ptr<const Objective> base, double sigma,
                         std::uint64_t xi_seed) {
  return NoisySample(std::move(base), sigma, xi_seed);
}

// ---------------------------------------------------------------------------
// LayeredChain

LayeredChain LayeredChain::make(std::size_t blocks, std::size_t width, std::uint64_t seed) {
  if (blocks == 0 || width == 0) throw InvalidArgument("chain needs blocks >= 1 and width >= 1");
  LayeredChain chain;
  chain.blocks_ = blocks;
  chain.width_ = width;
  chain.seed_ = seed;
  CounterRng rng(combine_key(mix64(seed ^ 0xc4a1dULL), 0));
  chain.input_.resize(width);
  chain.target_.resize(width);
  for (double& value : chain.input_) value = rng.normal();
  for (double& value : chain.target_) value = 0.8 * (2.0 * rng.uniform_open_closed() - 1.0);
  return chain;
}

Partition LayeredChain::layer_partition() const {
  std::vector<std::size_t> sizes(blocks_, slice_size());
  return Partition::contiguous(sizes);
}

Vector LayeredChain::initial_point() const {
  CounterRng rng(combine_key(mix64(seed_ ^ 0xc4a1dULL), 1));
  Vector x(dimension());
  const double scale = 1.0 / std::sqrt(static_cast<double>(width_));
  for (double& value : x) value = scale * rng.normal();
  return x;
}

Vector LayeredChain::forward_block(std::size_t block, std::span<const double> h_in,
                                   std::span<const double> x) const {
  if (block >= blocks_) throw InvalidArgument("chain block index out of range");
  if (h_in.size() != width_ || x.size() != dimension()) {
    throw InvalidArgument("chain: activation or parameter size mismatch");
  }
  const double* w = x.data() + slice_offset(block);
  const double* b = w + width_ * width_;
  Vector h_out(width_);
  for (std::size_t r = 0; r < width_; ++r) {
    double pre = b[r];
    for (std::size_t c = 0; c < width_; ++c) pre += w[r * width_ + c] * h_in[c];
    h_out[r] = std::tanh(pre);
  }
  return h_out;
}

double LayeredChain::terminal_loss(std::span<const double> h_last) const {
  double loss = 0.0;
  for (std::size_t k = 0; k < width_; ++k) {
    const double diff = h_last[k] - target_[k];
    loss += diff * diff;
  }
  return loss;
}

std::uint64_t LayeredChain::prefix_fingerprint(std::span<const double> x,
                                               std::size_t next_block) const {
  // FNV-1a over the raw bytes of the leading slices.
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  const auto bytes = std::as_bytes(x.first(slice_offset(next_block)));
  for (std::byte byte : bytes) {
    hash ^= static_cast<std::uint64_t>(byte);
    hash *= 0x100000001b3ULL;
  }
  return combine_key(hash, next_block);
}

ChainPrefix LayeredChain::make_prefix(std::span<const double> x, std::size_t next_block,
                                      Vector activation) const {
  if (next_block >= blocks_) throw InvalidArgument("prefix block index out of range");
  if (activation.size() != width_) throw InvalidArgument("prefix activation size mismatch");
  return ChainPrefix{next_block, std::move(activation), prefix_fingerprint(x, next_block)};
}

ChainEval LayeredChain::evaluate(std::span<const double> x, const ChainPrefix* prefix) const {
  if (x.size() != dimension()) throw InvalidArgument("chain: parameter size mismatch");
  std::size_t start = 0;
  Vector h = input_;
  if (prefix != nullptr) {
    if (prefix->next_block >= blocks_) throw InvalidArgument("prefix block index out of range");
    if (prefix->fingerprint != prefix_fingerprint(x, prefix->next_block)) {
      throw InvalidArgument("stale chain prefix: leading parameter slices changed");
    }
    start = prefix->next_block;
    h = prefix->activation;
  }
  ChainEval result;
  result.activations.reserve(blocks_ - start);
  for (std::size_t j = start; j < blocks_; ++j) {
    h = forward_block(j, h, x);
    result.activations.push_back(h);
    ++result.blocks_forwarded;
  }
  result.loss = terminal_loss(h);
  return result;
}

double LayeredChain::value(std::span<const double> x) const { return evaluate(x).loss; }

Vector LayeredChain::gradient(std::span<const double> x) const {
  const ChainEval forward = evaluate(x);
  Vector grad(dimension(), 0.0);
  // delta = dL/d(pre-activation) of the current block.
  Vector delta(width_);
  const Vector& last = forward.activations.back();
  for (std::size_t k = 0; k < width_; ++k) {
    delta[k] = 2.0 * (last[k] - target_[k]) * (1.0 - last[k] * last[k]);
  }
  for (std::size_t jj = blocks_; jj-- > 0;) {
    const Vector& h_in = jj == 0 ? input_ : forward.activations[jj - 1];
    const double* w = x.data() + slice_offset(jj);
    double* gw = grad.data() + slice_offset(jj);
    double* gb = gw + width_ * width_;
    for (std::size_t r = 0; r < width_; ++r) {
      for (std::size_t c = 0; c < width_; ++c) gw[r * width_ + c] = delta[r] * h_in[c];
      gb[r] = delta[r];
    }
    if (jj == 0) break;
    Vector upstream(width_, 0.0);
    for (std::size_t c = 0; c < width_; ++c) {
      double sum = 0.0;
      for (std::size_t r = 0; r < width_; ++r) sum += w[r * width_ + c] * delta[r];
      upstream[c] = sum * (1.0 - h_in[c] * h_in[c]);
    }
    delta = std::move(upstream);
  }
  return grad;
}

}  // namespace zo
