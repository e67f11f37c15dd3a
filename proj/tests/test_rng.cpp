#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "flatgrad/rng.hpp"

using namespace flatgrad;

TEST_CASE("derived seeds are stable and stream-separated", "[rng]") {
  REQUIRE(derive_seed(42, 7) == derive_seed(42, 7));
  REQUIRE(derive_seed(42, 7) != derive_seed(42, 8));
  REQUIRE(derive_seed(42, 7) != derive_seed(43, 7));
  REQUIRE(derive_seed(42, 7, 0) != derive_seed(42, 7, 1));
  REQUIRE(derive_seed(42, 7, 3) == derive_seed(42, 7, 3));

  // no collisions across a small grid of streams and indices
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 16; ++s)
    for (std::uint64_t i = 0; i < 64; ++i) seen.insert(derive_seed(99, s, i));
  REQUIRE(seen.size() == 16 * 64);
}

TEST_CASE("same seed reproduces every distribution", "[rng]") {
  Rng a = make_rng(123), b = make_rng(123);
  for (int i = 0; i < 100; ++i) {
    REQUIRE(uniform_double(a) == uniform_double(b));
    REQUIRE(normal(a) == normal(b));
    REQUIRE(gumbel(a) == gumbel(b));
    REQUIRE(gamma_sample(a, 2.5) == gamma_sample(b, 2.5));
    REQUIRE(beta_sample(a, 2.0, 3.0) == beta_sample(b, 2.0, 3.0));
    REQUIRE(uniform_index(a, 17) == uniform_index(b, 17));
  }
}

TEST_CASE("uniform draws stay in range with matching moments", "[rng]") {
  Rng rng = make_rng(2024);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = uniform_double(rng);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // mean of U[0,1): sd of the sample mean is 1/sqrt(12 n) ~ 0.0009
  REQUIRE(sum / n == Catch::Approx(0.5).margin(0.004));

  for (int i = 0; i < 10000; ++i) {
    const double u = uniform_open(rng);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }

  double lo = 10.0, hi = -10.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform_range(rng, -2.0, 3.0);
    REQUIRE(u >= -2.0);
    REQUIRE(u < 3.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  REQUIRE(lo < -1.9);
  REQUIRE(hi > 2.9);
}

TEST_CASE("uniform index covers the range evenly", "[rng]") {
  Rng rng = make_rng(7);
  const std::size_t k = 8;
  std::vector<int> counts(k, 0);
  const int n = 80000;
  for (int i = 0; i < n; ++i) {
    const std::size_t v = uniform_index(rng, k);
    REQUIRE(v < k);
    ++counts[v];
  }
  const double expect = double(n) / k;
  for (int c : counts) REQUIRE(std::abs(c - expect) < 4.0 * std::sqrt(expect));
  REQUIRE_THROWS_AS(uniform_index(rng, 0), std::invalid_argument);
}

TEST_CASE("normal and gumbel moments", "[rng]") {
  Rng rng = make_rng(55);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = normal(rng);
    s1 += x;
    s2 += x * x;
  }
  const double mean = s1 / n;
  const double var = s2 / n - mean * mean;
  REQUIRE(mean == Catch::Approx(0.0).margin(4.0 / std::sqrt(double(n))));
  REQUIRE(var == Catch::Approx(1.0).margin(0.02));

  double g1 = 0.0;
  for (int i = 0; i < n; ++i) g1 += gumbel(rng);
  const double euler = 0.57721566490153286;
  REQUIRE(g1 / n == Catch::Approx(euler).margin(4.0 * 1.2825 / std::sqrt(double(n))));
}

TEST_CASE("gamma and beta moments", "[rng]") {
  Rng rng = make_rng(91);
  const int n = 200000;

  for (double shape : {0.5, 2.5}) {  // below 1 exercises the boosting branch
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = gamma_sample(rng, shape);
      REQUIRE(x > 0.0);
      s1 += x;
      s2 += x * x;
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    REQUIRE(mean == Catch::Approx(shape).margin(0.03));
    REQUIRE(var == Catch::Approx(shape).margin(0.08));
  }

  double b1 = 0.0, b2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = beta_sample(rng, 2.0, 3.0);
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.0);
    b1 += x;
    b2 += x * x;
  }
  const double mean = b1 / n;  // a/(a+b) = 0.4
  const double var = b2 / n - mean * mean;  // ab/((a+b)^2 (a+b+1)) = 0.04
  REQUIRE(mean == Catch::Approx(0.4).margin(0.005));
  REQUIRE(var == Catch::Approx(0.04).margin(0.004));

  REQUIRE_THROWS_AS(gamma_sample(rng, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(beta_sample(rng, -1.0, 2.0), std::invalid_argument);
}
