#include "zo/perturb.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace zo {

std::string_view to_string(Distribution distribution) {
  switch (distribution) {
    case Distribution::kGaussian:
      return "gaussian";
    case Distribution::kUniformSphere:
      return "uniform";
    case Distribution::kRademacher:
      return "rademacher";
    case Distribution::kTernary:
      return "ternary";
  }
  return "unknown";
}

Distribution parse_distribution(std::string_view tag) {
  if (tag == "gaussian") return Distribution::kGaussian;
  if (tag == "uniform") return Distribution::kUniformSphere;
  if (tag == "rademacher") return Distribution::kRademacher;
  if (tag == "ternary") return Distribution::kTernary;
  throw InvalidArgument("unknown perturbation distribution '" + std::string(tag) + "'");
}

void PerturbationSpec::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw InvalidArgument("perturbation epsilon must be finite and > 0");
  }
}

double CounterRng::uniform_open_closed() noexcept {
  return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
}

double CounterRng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double radius = std::sqrt(-2.0 * std::log(uniform_open_closed()));
  const double angle = 2.0 * std::numbers::pi * uniform_open_closed();
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

__extension__ using Wide = unsigned __int128;

std::uint64_t CounterRng::below(std::uint64_t n) noexcept {
  return static_cast<std::uint64_t>((static_cast<Wide>((*this)()) * n) >> 64);
}

std::uint64_t replay_key(std::uint64_t base_seed, const ReplayCoordinate& coord) noexcept {
  std::uint64_t key = mix64(base_seed ^ 0x5a0f1e2d3c4b6978ULL);
  key = combine_key(key, coord.step);
  key = combine_key(key, coord.sample_index);
  key = combine_key(key, coord.block_index);
  return key;
}

void sample_direction_into(const PerturbationSpec& spec, const ReplayCoordinate& coord,
                           std::span<double> out) {
  if (out.empty()) throw InvalidArgument("direction dimension must be >= 1");
  CounterRng rng(replay_key(spec.base_seed, coord));
  switch (spec.distribution) {
    case Distribution::kGaussian:
      for (double& value : out) value = rng.normal();
      break;
    case Distribution::kUniformSphere: {
      double norm_sq = 0.0;
      for (double& value : out) {
        value = rng.normal();
        norm_sq += value * value;
      }
      const double inv_norm = 1.0 / std::sqrt(norm_sq);
      for (double& value : out) value *= inv_norm;
      break;
    }
    case Distribution::kRademacher:
      for (double& value : out) value = (rng() >> 63) != 0 ? 1.0 : -1.0;
      break;
    case Distribution::kTernary:
      for (double& value : out) value = static_cast<double>(rng.below(3)) - 1.0;
      break;
  }
}

Vector sample_direction(const PerturbationSpec& spec, const ReplayCoordinate& coord,
                        std::size_t d) {
  Vector out(d);
  sample_direction_into(spec, coord, out);
  return out;
}

double second_moment_scale(Distribution distribution, std::size_t d) {
  switch (distribution) {
    case Distribution::kGaussian:
    case Distribution::kRademacher:
      return 1.0;
    case Distribution::kUniformSphere:
      if (d == 0) throw InvalidArgument("sphere dimension must be >= 1");
      return 1.0 / static_cast<double>(d);
    case Distribution::kTernary:
      return 2.0 / 3.0;
  }
  throw InvalidArgument("unknown distribution");
}

double estimator_scale(Distribution distribution, std::size_t d) noexcept {
  return distribution == Distribution::kUniformSphere ? static_cast<double>(d) : 1.0;
}

}  // namespace zo
