#include <cmath>

#include "doctest.h"
#include "zo/estimators.hpp"

using namespace zo;

namespace {

struct CountingFn {
  ObjectiveFn inner;
  std::shared_ptr<std::size_t> calls = std::make_shared<std::size_t>(0);
  double operator()(std::span<const double> x) const {
    ++*calls;
    return inner(x);
  }
};

ObjectiveFn affine(Vector a, double offset = 0.0) {
  return [a = std::move(a), offset](std::span<const double> x) {
    double total = offset;
    for (std::size_t k = 0; k < x.size(); ++k) total += a[k] * x[k];
    return total;
  };
}

double half_norm_sq(std::span<const double> x) {
  double total = 0.0;
  for (double value : x) total += value * value;
  return 0.5 * total;
}

// The cached schedule walked step by step: one prefix forward per block except the
// last, and for every (block, sample, sign) the suffix j..p.
std::uint64_t brute_force_block_forwards(std::uint64_t p, std::uint64_t q) {
  std::uint64_t count = 0;
  for (std::uint64_t j = 1; j <= p; ++j) {
    for (std::uint64_t i = 0; i < q; ++i) {
      for (int sign = 0; sign < 2; ++sign) count += p - j + 1;
    }
    if (j < p) count += 1;
  }
  return count;
}

}  // namespace

TEST_CASE("partition validation") {
  CHECK_NOTHROW(Partition(3, {{0, 2}, {1}}));
  CHECK_THROWS_AS(Partition(3, {{0, 1}, {1, 2}}), InvalidArgument);  // overlap
  CHECK_THROWS_AS(Partition(3, {{0, 1}}), InvalidArgument);          // gap
  CHECK_THROWS_AS(Partition(3, {{0, 1, 3}}), InvalidArgument);       // out of range
  CHECK_THROWS_AS(Partition(3, {{0, 1, 2}, {}}), InvalidArgument);   // empty block
  CHECK_THROWS_AS(Partition(0, {}), InvalidArgument);

  const std::size_t sizes[] = {2, 3};
  const Partition p = Partition::contiguous(sizes);
  CHECK(p.dimension() == 5);
  CHECK(p.block_count() == 2);
  CHECK(p.block_size(1) == 3);

  const std::pair<std::size_t, std::size_t> ranges[] = {{0, 2}, {2, 5}};
  CHECK(Partition::from_ranges(5, ranges) == p);
  const std::pair<std::size_t, std::size_t> bad[] = {{0, 2}, {3, 5}};
  CHECK_THROWS_AS(Partition::from_ranges(5, bad), InvalidArgument);
}

TEST_CASE("masks sum to the all-ones vector") {
  const Partition p(5, {{4, 0}, {2}, {1, 3}});
  Vector total(5, 0.0);
  for (std::size_t j = 0; j < p.block_count(); ++j) {
    const Vector m = p.mask(j);
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK((m[k] == 0.0 || m[k] == 1.0));
      total[k] += m[k];
    }
  }
  CHECK(total == Vector(5, 1.0));
  CHECK(Partition::single(4).mask(0) == Vector(4, 1.0));
}

TEST_CASE("projected gradient examples") {
  const Vector x = {0.3, -1.2};
  const Vector u = {1.0, 1.0};
  CHECK(projected_gradient([](std::span<const double>) { return 4.2; }, x, u, 0.1) == 0.0);
  CHECK(projected_gradient(affine({2.0, -1.0}), x, u, 0.5) == doctest::Approx(1.0).epsilon(1e-15));

  const Vector y = {1.0, 2.0};
  const Vector e1 = {1.0, 0.0};
  // f(1.1, 2) = 2.605, f(0.9, 2) = 2.405.
  CHECK(projected_gradient(half_norm_sq, y, e1, 0.1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("projected gradient is exact on affine functions for every eps") {
  const Vector a = {0.5, -3.0, 2.0};
  const Vector x = {1.0, 2.0, 3.0};
  const Vector u = {0.2, 0.7, -1.1};
  const double directional = 0.5 * 0.2 - 3.0 * 0.7 - 2.0 * 1.1;
  for (double eps : {1e-6, 1e-3, 1.0, 10.0}) {
    CHECK(projected_gradient(affine(a), x, u, eps) == doctest::Approx(directional).epsilon(1e-9));
  }
}

TEST_CASE("non-finite objective values raise NumericFailure carrying the point") {
  const ObjectiveFn bad = [](std::span<const double> x) { return x[0] > 0.0 ? NAN : 0.0; };
  const Vector x = {0.0};
  const Vector u = {1.0};
  try {
    projected_gradient(bad, x, u, 0.5);
    FAIL("expected NumericFailure");
  } catch (const NumericFailure& failure) {
    REQUIRE(failure.point().size() == 1);
    CHECK(failure.point()[0] == 0.5);
  }
}

TEST_CASE("zo_gradient: evaluation count, constant and affine cases") {
  const Vector x = {0.1, 0.2, 0.3, 0.4};
  for (Distribution dist : {Distribution::kGaussian, Distribution::kUniformSphere,
                            Distribution::kRademacher, Distribution::kTernary}) {
    for (std::size_t q : {1u, 3u, 7u}) {
      CountingFn counted{[](std::span<const double>) { return 1.5; }};
      const ZoEstimate est = zo_gradient(counted, x, {dist, 1e-3, 1}, q, 4);
      CHECK(*counted.calls == 2 * q);
      CHECK(est.evaluations == 2 * q);
      CHECK(est.projected.size() == q);
      CHECK(est.gradient == Vector(4, 0.0));
    }
  }

  const Vector a = {1.0, -2.0, 0.5, 3.0};
  const PerturbationSpec spec{Distribution::kGaussian, 1e-2, 11};
  const ZoEstimate est = zo_gradient(affine(a), x, spec, 1, 9);
  const Vector u = sample_direction(spec, {9, 0, 0}, 4);
  double au = 0.0;
  for (std::size_t k = 0; k < 4; ++k) au += a[k] * u[k];
  for (std::size_t k = 0; k < 4; ++k) CHECK(est.gradient[k] == doctest::Approx(au * u[k]).epsilon(1e-9));
  CHECK_THROWS_AS(zo_gradient(affine(a), x, spec, 0, 0), InvalidArgument);
}

TEST_CASE("uniform-sphere estimator is scaled by d") {
  const Vector a = {1.0, 2.0, 3.0};
  const Vector x(3, 0.0);
  const PerturbationSpec spec{Distribution::kUniformSphere, 1e-2, 3};
  const ZoEstimate est = zo_gradient(affine(a), x, spec, 1, 0);
  const Vector u = sample_direction(spec, {0, 0, 0}, 3);
  const double au = a[0] * u[0] + a[1] * u[1] + a[2] * u[2];
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(est.gradient[k] == doctest::Approx(3.0 * au * u[k]).epsilon(1e-9));
  }
}

TEST_CASE("estimators replay identically") {
  const BlockQuadratic quad = BlockQuadratic::make(9, Regime::kHeterogeneous, 1);
  const Vector x = quad.initial_point(1.0, 2);
  const PerturbationSpec spec{Distribution::kGaussian, 1e-4, 8};
  const auto f = quad.as_function();
  CHECK(zo_gradient(f, x, spec, 5, 12).gradient == zo_gradient(f, x, spec, 5, 12).gradient);
  const Partition part = quad.natural_partition();
  CHECK(grouped_zo_gradient(f, x, spec, 3, part, 2).gradient ==
        grouped_zo_gradient(f, x, spec, 3, part, 2).gradient);
}

TEST_CASE("grouped with one block is bit-identical to zo_gradient") {
  const BlockQuadratic quad = BlockQuadratic::make(16, Regime::kHeterogeneous, 4);
  const Vector x = quad.initial_point(2.0, 5);
  const auto f = quad.as_function();
  for (Distribution dist : {Distribution::kGaussian, Distribution::kUniformSphere,
                            Distribution::kRademacher, Distribution::kTernary}) {
    const PerturbationSpec spec{dist, 1e-4, 21};
    const ZoEstimate plain = zo_gradient(f, x, spec, 4, 7);
    const ZoEstimate grouped = grouped_zo_gradient(f, x, spec, 4, Partition::single(16), 7);
    CHECK(plain.gradient == grouped.gradient);
    CHECK(plain.projected == grouped.projected);
  }
}

TEST_CASE("grouped: count 2qp, one coordinate per block recovers an affine gradient exactly") {
  const Vector a = {1.5, -2.0, 0.25, 4.0, -1.0};
  const Vector x = {0.0, 1.0, 2.0, 3.0, 4.0};
  std::vector<std::vector<std::size_t>> singles;
  for (std::size_t k = 0; k < 5; ++k) singles.push_back({k});
  const Partition part(5, singles);
  CountingFn counted{affine(a)};
  const ZoEstimate est =
      grouped_zo_gradient(counted, x, {Distribution::kRademacher, 0.1, 3}, 1, part, 0);
  CHECK(*counted.calls == 2 * 1 * 5);
  for (std::size_t k = 0; k < 5; ++k) CHECK(est.gradient[k] == doctest::Approx(a[k]).epsilon(1e-12));

  CountingFn constant{[](std::span<const double>) { return -7.0; }};
  const Partition two(5, {{0, 1}, {2, 3, 4}});
  const ZoEstimate zero = grouped_zo_gradient(constant, x, {Distribution::kGaussian, 0.1, 3}, 3, two, 0);
  CHECK(*constant.calls == 2 * 3 * 2);
  CHECK(zero.gradient == Vector(5, 0.0));

  CHECK_THROWS_AS(grouped_zo_gradient(affine(a), x, {Distribution::kGaussian, 0.1, 3}, 1,
                                      Partition::single(4), 0),
                  InvalidArgument);
}

TEST_CASE("grouped perturbations only touch their block") {
  const Partition part(4, {{0, 1}, {2, 3}});
  const Vector x = {1.0, 2.0, 3.0, 4.0};
  bool clean = true;
  // f records whether a query moved coordinates of both blocks at once.
  const ObjectiveFn f = [&](std::span<const double> y) {
    const bool first = y[0] != x[0] || y[1] != x[1];
    const bool second = y[2] != x[2] || y[3] != x[3];
    if (first && second) clean = false;
    return y[0] + y[3];
  };
  grouped_projected(f, x, {Distribution::kGaussian, 0.1, 2}, 3, part, 0);
  CHECK(clean);
}

TEST_CASE("projected-gradient bound holds on an L-smooth quadratic") {
  const BlockQuadratic quad = BlockQuadratic::make(9, Regime::kHeterogeneous, 3);
  const double L = quad.smoothness();
  const auto f = quad.as_function();
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Vector x = sample_direction({Distribution::kGaussian, 1.0, 1000 + s}, {0, 0, 0}, 9);
    const Vector u = sample_direction({Distribution::kGaussian, 1.0, 2000 + s}, {0, 0, 0}, 9);
    const Vector g = quad.gradient(x);
    double gu = 0.0;
    double uu = 0.0;
    for (std::size_t k = 0; k < 9; ++k) {
      gu += g[k] * u[k];
      uu += u[k] * u[k];
    }
    for (double eps : {1e-4, 1e-2, 1.0}) {
      CHECK(std::abs(projected_gradient(f, x, u, eps)) <= std::abs(gu) + 0.5 * L * eps * uu);
    }
  }
}

TEST_CASE("uniform-sphere estimator averages to Hx on a quadratic") {
  const BlockQuadratic quad = BlockQuadratic::make(9, Regime::kHeterogeneous, 0);
  const Vector x = quad.initial_point(1.0, 1);
  const Vector hx = quad.gradient(x);
  const auto f = quad.as_function();
  const PerturbationSpec spec{Distribution::kUniformSphere, 1e-3, 17};
  constexpr std::size_t n = 100000;
  Vector sum(9, 0.0);
  Vector sum_sq(9, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const Vector g = zo_gradient(f, x, spec, 1, t).gradient;
    for (std::size_t k = 0; k < 9; ++k) {
      sum[k] += g[k];
      sum_sq[k] += g[k] * g[k];
    }
  }
  for (std::size_t k = 0; k < 9; ++k) {
    const double mean = sum[k] / n;
    const double se = std::sqrt((sum_sq[k] / n - mean * mean) / n);
    CHECK(std::abs(mean - hx[k]) < 4.0 * se);
  }
}

TEST_CASE("efficient grouped forward counts") {
  CHECK(efficient_grouped_forwards(16, 1) == 287);
  CHECK(efficient_grouped_forwards(1, 1) == 2);
  CHECK(efficient_grouped_forwards(3, 2) == 26);
  for (std::uint64_t p = 1; p <= 20; ++p) {
    for (std::uint64_t q = 1; q <= 5; ++q) {
      CHECK(efficient_grouped_forwards(p, q) == brute_force_block_forwards(p, q));
    }
  }
  const double ratio = 512.0 / 287.0;
  CHECK(ratio == doctest::Approx(1.784).epsilon(1e-3));
}

TEST_CASE("efficient grouped evaluation matches naive grouped bit-for-bit and counts exactly") {
  const std::pair<std::size_t, std::size_t> shapes[] = {{1, 1}, {3, 2}, {4, 3}, {16, 1}};
  for (const auto& [p, q] : shapes) {
    CAPTURE(p);
    CAPTURE(q);
    const LayeredChain chain = LayeredChain::make(p, 4, 10 + p);
    const Vector x = chain.initial_point();
    const PerturbationSpec spec{Distribution::kGaussian, 1e-4, 5};
    const EfficientGroupedResult fast = efficient_grouped_eval(chain, x, spec, q, 3);
    CountingFn counted{chain.as_function()};
    const ZoEstimate naive = grouped_zo_gradient(counted, x, spec, q, chain.layer_partition(), 3);
    CHECK(fast.estimate.gradient == naive.gradient);
    CHECK(fast.estimate.projected == naive.projected);
    CHECK(fast.counter.block_forward_calls == efficient_grouped_forwards(p, q));
    CHECK(fast.counter.full_forward_calls == 2 * q * p);
    // Naive: every one of the 2qp queries forwards all p blocks.
    CHECK(*counted.calls * p == 2 * q * p * p);
  }
}

TEST_CASE("efficient grouped evaluation rejects non-layered objectives") {
  const BlockQuadratic quad = BlockQuadratic::make(4, Regime::kHeterogeneous, 0);
  const Vector x(4, 0.1);
  CHECK_THROWS_AS(efficient_grouped_eval(quad, x, {Distribution::kGaussian, 1e-3, 0}, 1, 0),
                  InvalidArgument);
}
