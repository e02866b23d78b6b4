#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dbdiag/error.hpp"
#include "dbdiag/kernels.hpp"

using namespace dbdiag::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// Every length from empty through several vector widths plus a remainder.
const std::size_t kLengths[] = {0, 1, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 150, 181};

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("scalar reference kernels") {
  std::vector<double> x{1, 2, 3}, y{4, 5, 6};
  CHECK(scalar::dot(x.data(), y.data(), 3) == 32.0);
  CHECK(scalar::sum_sq_diff(x.data(), y.data(), 3) == 27.0);
  scalar::axpy(2.0, x.data(), y.data(), 3);
  CHECK(y == std::vector<double>{6, 9, 12});
}

TEST_CASE("scalar ADAM update with g = 1 moves by the learning rate on the first step") {
  double p = 0.0, g = 1.0, m = 0.0, v = 0.0;
  const double b1 = 0.9, b2 = 0.999, lr = 0.1;
  AdamCoefficients c{lr / (1 - b1), b1, b2, 1e-8, 1 / (1 - b2)};
  scalar::adam_update(&p, &g, &m, &v, 1, c);
  CHECK(p == doctest::Approx(-0.1).epsilon(1e-7));
}

TEST_CASE("AVX2 kernels agree with the scalar reference") {
  if (!isa_supported(Isa::Avx2)) {
    MESSAGE("AVX2 not available on this CPU; only the scalar path is exercised");
    CHECK_THROWS_AS(set_active(Isa::Avx2), dbdiag::ConfigError);
    return;
  }
  std::mt19937_64 rng(42);
  for (std::size_t n : kLengths) {
    CAPTURE(n);
    const auto x = random_vec(n, rng), y = random_vec(n, rng, 3.0);
    double absDot = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      absDot += std::abs(x[i] * y[i]);
      sq += (x[i] - y[i]) * (x[i] - y[i]);
    }
    // Lane-wise partial sums only reorder the additions.
    CHECK(std::abs(avx2::dot(x.data(), y.data(), n) - scalar::dot(x.data(), y.data(), n)) <=
          1e-14 * (absDot + 1.0));
    CHECK(std::abs(avx2::sum_sq_diff(x.data(), y.data(), n) - scalar::sum_sq_diff(x.data(), y.data(), n)) <=
          1e-14 * (sq + 1.0));

    auto ys = y, yv = y;
    scalar::axpy(0.37, x.data(), ys.data(), n);
    avx2::axpy(0.37, x.data(), yv.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      // A fused multiply-add differs from mul-then-add by at most one rounding.
      CHECK(std::abs(ys[i] - yv[i]) <= 4e-16 * (std::abs(y[i]) + std::abs(0.37 * x[i])));
    }
  }
}

TEST_CASE("AVX2 ADAM update is bit-identical to the scalar reference") {
  if (!isa_supported(Isa::Avx2)) return;
  std::mt19937_64 rng(7);
  for (std::size_t n : kLengths) {
    CAPTURE(n);
    auto p1 = random_vec(n, rng), g = random_vec(n, rng), m1 = random_vec(n, rng, 0.1), v1 = random_vec(n, rng);
    for (auto& v : v1) v = std::abs(v);
    auto p2 = p1, m2 = m1, v2 = v1;
    for (int t = 1; t <= 3; ++t) {
      AdamCoefficients c{1e-3 / (1 - std::pow(0.9, t)), 0.9, 0.999, 1e-8, 1 / (1 - std::pow(0.999, t))};
      scalar::adam_update(p1.data(), g.data(), m1.data(), v1.data(), n, c);
      avx2::adam_update(p2.data(), g.data(), m2.data(), v2.data(), n, c);
    }
    CHECK(p1 == p2);
    CHECK(m1 == m2);
    CHECK(v1 == v2);
  }
}

TEST_CASE("runtime selection can be overridden") {
  const Isa before = active().isa;
  set_active(Isa::Scalar);
  CHECK(active().isa == Isa::Scalar);
  CHECK(active().dot == &scalar::dot);
  if (isa_supported(Isa::Avx2)) {
    set_active(Isa::Avx2);
    CHECK(active().isa == Isa::Avx2);
  }
  set_active(before);
  CHECK(isa_name(Isa::Scalar) == "scalar");
}

}  // TEST_SUITE
