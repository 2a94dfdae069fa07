#pragma once

// Replay-keyed direction sampling. A direction is a pure function of
// (base_seed, step, sample_index, block_index), so callers keep the key and
// regenerate the vector when they need it instead of storing it.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "zo/errors.hpp"

namespace zo {

enum class Distribution { kGaussian, kUniformSphere, kRademacher, kTernary };

/// Config spelling: "gaussian", "uniform", "rademacher", "ternary".
std::string_view to_string(Distribution distribution);
Distribution parse_distribution(std::string_view tag);

struct PerturbationSpec {
  Distribution distribution = Distribution::kGaussian;
  double epsilon = 1e-6;
  std::uint64_t base_seed = 0;

  /// Throws InvalidArgument unless epsilon is finite and positive.
  void validate() const;
};

struct ReplayCoordinate {
  std::uint64_t step = 0;
  std::uint64_t sample_index = 0;
  std::uint64_t block_index = 0;
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Folds a sequence of words into one 64-bit stream key.
constexpr std::uint64_t combine_key(std::uint64_t key, std::uint64_t word) noexcept {
  return mix64(key ^ mix64(word + 0x9e3779b97f4a7c15ULL));
}

/// Counter-based generator: output n of stream `key` is mix64(key + (n+1)*golden).
/// Satisfies UniformRandomBitGenerator so it composes with <random> if needed.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform on (0, 1], 53-bit resolution.
  double uniform_open_closed() noexcept;
  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() noexcept;
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stream key for one perturbation direction.
std::uint64_t replay_key(std::uint64_t base_seed, const ReplayCoordinate& coord) noexcept;

/// Fills `out` with the direction at `coord`. Throws InvalidArgument on an
/// empty span.
void sample_direction_into(const PerturbationSpec& spec, const ReplayCoordinate& coord,
                           std::span<double> out);

Vector sample_direction(const PerturbationSpec& spec, const ReplayCoordinate& coord,
                        std::size_t d);

/// sigma with E[u u^T] = sigma * I for a direction of dimension d.
double second_moment_scale(Distribution distribution, std::size_t d);

/// Multiplier applied to the q-sample estimator: d for the unit sphere, 1 otherwise.
double estimator_scale(Distribution distribution, std::size_t d) noexcept;

}  // namespace zo
