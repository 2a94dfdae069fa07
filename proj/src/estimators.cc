#include "zo/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace zo {

Partition::Partition(std::size_t dimension, std::vector<std::vector<std::size_t>> blocks)
    : dimension_(dimension), blocks_(std::move(blocks)) {
  if (dimension_ == 0) throw InvalidArgument("partition dimension must be >= 1");
  if (blocks_.empty()) throw InvalidArgument("partition needs at least one block");
  std::vector<char> seen(dimension_, 0);
  std::size_t covered = 0;
  for (const auto& block : blocks_) {
    if (block.empty()) throw InvalidArgument("partition blocks must be non-empty");
    for (std::size_t index : block) {
      if (index >= dimension_) {
        throw InvalidArgument("partition index " + std::to_string(index) + " out of range");
      }
      if (seen[index] != 0) {
        throw InvalidArgument("partition blocks overlap at index " + std::to_string(index));
      }
      seen[index] = 1;
      ++covered;
    }
  }
  if (covered != dimension_) throw InvalidArgument("partition does not cover every coordinate");
}

Partition Partition::single(std::size_t dimension) {
  std::vector<std::size_t> all(dimension);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return Partition(dimension, {std::move(all)});
}

Partition Partition::contiguous(std::span<const std::size_t> sizes) {
  std::vector<std::vector<std::size_t>> blocks;
  std::size_t next = 0;
  for (std::size_t size : sizes) {
    std::vector<std::size_t> block(size);
    std::iota(block.begin(), block.end(), next);
    next += size;
    blocks.push_back(std::move(block));
  }
  return Partition(next, std::move(blocks));
}

Partition Partition::from_ranges(std::size_t dimension,
                                 std::span<const std::pair<std::size_t, std::size_t>> ranges) {
  std::vector<std::vector<std::size_t>> blocks;
  for (const auto& [begin, end] : ranges) {
    if (end <= begin) throw InvalidArgument("partition range must satisfy begin < end");
    std::vector<std::size_t> block(end - begin);
    std::iota(block.begin(), block.end(), begin);
    blocks.push_back(std::move(block));
  }
  return Partition(dimension, std::move(blocks));
}

Vector Partition::mask(std::size_t j) const {
  Vector m(dimension_, 0.0);
  for (std::size_t index : block(j)) m[index] = 1.0;
  return m;
}

namespace {

void check_finite(double value, std::span<const double> point) {
  if (!std::isfinite(value)) {
    throw NumericFailure("objective returned a non-finite value",
                         Vector(point.begin(), point.end()));
  }
}

// Central difference along a direction supported on `indices`; `local` holds
// the direction's entries on those indices.
double block_difference(const ObjectiveFn& f, std::span<const double> x,
                        std::span<const std::size_t> indices, std::span<const double> local,
                        double eps, Vector& scratch) {
  scratch.assign(x.begin(), x.end());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    scratch[indices[k]] = x[indices[k]] + eps * local[k];
  }
  const double plus = f(scratch);
  check_finite(plus, scratch);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    scratch[indices[k]] = x[indices[k]] - eps * local[k];
  }
  const double minus = f(scratch);
  check_finite(minus, scratch);
  return (plus - minus) / (2.0 * eps);
}

void check_q(std::size_t q) {
  if (q == 0) throw InvalidArgument("sample count q must be >= 1");
}

std::vector<double> block_coefficients(const PerturbationSpec& spec, std::size_t q,
                                       const Partition& partition) {
  std::vector<double> coefficients(partition.block_count());
  for (std::size_t j = 0; j < coefficients.size(); ++j) {
    coefficients[j] =
        estimator_scale(spec.distribution, partition.block_size(j)) / static_cast<double>(q);
  }
  return coefficients;
}

}  // namespace

double projected_gradient(const ObjectiveFn& f, std::span<const double> x,
                          std::span<const double> u, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("epsilon must be > 0");
  if (u.size() != x.size()) throw InvalidArgument("direction and point dimensions differ");
  std::vector<std::size_t> all(x.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Vector scratch;
  return block_difference(f, x, all, u, eps, scratch);
}

std::vector<double> grouped_projected(const ObjectiveFn& f, std::span<const double> x,
                                      const PerturbationSpec& spec, std::size_t q,
                                      const Partition& partition, std::uint64_t step) {
  spec.validate();
  check_q(q);
  if (partition.dimension() != x.size()) {
    throw InvalidArgument("partition dimension does not match the parameter vector");
  }
  const std::size_t p = partition.block_count();
  std::vector<double> projected(q * p);
  Vector scratch;
  Vector local;
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      local.resize(partition.block_size(j));
      sample_direction_into(spec, {step, i, j}, local);
      projected[i * p + j] =
          block_difference(f, x, partition.block(j), local, spec.epsilon, scratch);
    }
  }
  return projected;
}

std::vector<double> zo_projected(const ObjectiveFn& f, std::span<const double> x,
                                 const PerturbationSpec& spec, std::size_t q,
                                 std::uint64_t step) {
  if (x.empty()) throw InvalidArgument("parameter dimension must be >= 1");
  return grouped_projected(f, x, spec, q, Partition::single(x.size()), step);
}

void accumulate_replayed(std::span<double> out, std::span<const double> projected,
                         const PerturbationSpec& spec, std::size_t q,
                         const Partition& partition, std::uint64_t step,
                         std::span<const double> block_coefficients) {
  const std::size_t p = partition.block_count();
  if (out.size() != partition.dimension()) {
    throw InvalidArgument("output dimension does not match the partition");
  }
  if (projected.size() != q * p) throw InvalidArgument("expected q * p projected gradients");
  if (block_coefficients.size() != p) throw InvalidArgument("expected one coefficient per block");
  Vector local;
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const auto indices = partition.block(j);
      local.resize(indices.size());
      sample_direction_into(spec, {step, i, j}, local);
      const double weight = block_coefficients[j] * projected[i * p + j];
      for (std::size_t k = 0; k < indices.size(); ++k) out[indices[k]] += weight * local[k];
    }
  }
}

ZoEstimate grouped_zo_gradient(const ObjectiveFn& f, std::span<const double> x,
                               const PerturbationSpec& spec, std::size_t q,
                               const Partition& partition, std::uint64_t step) {
  ZoEstimate estimate;
  estimate.projected = grouped_projected(f, x, spec, q, partition, step);
  estimate.blocks = partition.block_count();
  estimate.evaluations = 2 * q * partition.block_count();
  estimate.gradient.assign(x.size(), 0.0);
  accumulate_replayed(estimate.gradient, estimate.projected, spec, q, partition, step,
                      block_coefficients(spec, q, partition));
  return estimate;
}

ZoEstimate zo_gradient(const ObjectiveFn& f, std::span<const double> x,
                       const PerturbationSpec& spec, std::size_t q, std::uint64_t step) {
  if (x.empty()) throw InvalidArgument("parameter dimension must be >= 1");
  return grouped_zo_gradient(f, x, spec, q, Partition::single(x.size()), step);
}

EfficientGroupedResult efficient_grouped_eval(const Objective& objective,
                                              std::span<const double> x,
                                              const PerturbationSpec& spec, std::size_t q,
                                              std::uint64_t step) {
  const auto* chain = dynamic_cast<const LayeredChain*>(&objective);
  if (chain == nullptr) {
    throw InvalidArgument("efficient grouped evaluation needs a layered objective");
  }
  spec.validate();
  check_q(q);
  if (x.size() != chain->dimension()) {
    throw InvalidArgument("parameter vector does not match the chain dimension");
  }
  const std::size_t p = chain->block_count();
  const Partition partition = chain->layer_partition();

  EfficientGroupedResult result;
  EvalCounter& counter = result.counter;
  std::vector<double> projected(q * p);

  // Forward blocks j..p-1 from h_in with block j's slice replaced.
  Vector perturbed(x.begin(), x.end());
  auto forward_suffix = [&](std::size_t j, const Vector& h_in) {
    Vector h = h_in;
    for (std::size_t k = j; k < p; ++k) {
      h = chain->forward_block(k, h, perturbed);
      ++counter.block_forward_calls;
    }
    ++counter.full_forward_calls;
    const double loss = chain->terminal_loss(h);
    if (!std::isfinite(loss)) throw NumericFailure("chain loss is non-finite", perturbed);
    return loss;
  };

  Vector cache = chain->input();
  Vector local;
  for (std::size_t j = 0; j < p; ++j) {
    const Vector prefix = cache;
    if (j + 1 < p) {
      cache = chain->forward_block(j, prefix, x);
      ++counter.block_forward_calls;
    }
    const auto indices = partition.block(j);
    local.resize(indices.size());
    for (std::size_t i = 0; i < q; ++i) {
      sample_direction_into(spec, {step, i, j}, local);
      for (std::size_t k = 0; k < indices.size(); ++k) {
        perturbed[indices[k]] = x[indices[k]] + spec.epsilon * local[k];
      }
      const double plus = forward_suffix(j, prefix);
      for (std::size_t k = 0; k < indices.size(); ++k) {
        perturbed[indices[k]] = x[indices[k]] - spec.epsilon * local[k];
      }
      const double minus = forward_suffix(j, prefix);
      projected[i * p + j] = (plus - minus) / (2.0 * spec.epsilon);
    }
    for (std::size_t index : indices) perturbed[index] = x[index];
  }

  ZoEstimate& estimate = result.estimate;
  estimate.projected = std::move(projected);
  estimate.blocks = p;
  estimate.evaluations = 2 * q * p;
  estimate.gradient.assign(x.size(), 0.0);
  accumulate_replayed(estimate.gradient, estimate.projected, spec, q, partition, step,
                      block_coefficients(spec, q, partition));
  return result;
}

}  // namespace zo
