#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cdu/rng.hpp"

TEST_CASE("same seed gives the same stream") {
  cdu::Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  cdu::Rng c(42), d(43);
  CHECK(c.next_u64() != d.next_u64());
}

TEST_CASE("mt19937_64 engine matches the standard's 10000th value") {
  // The standard fixes the 10000th output of a default-seeded mt19937_64.
  cdu::Rng rng(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  CHECK(v == 9981545732273789042ull);
}

TEST_CASE("uniform stays in [0, 1) and has mean near 1/2") {
  cdu::Rng rng(1);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // SE of the mean is sqrt(1/12 / n) ~ 9e-4.
  CHECK(std::abs(sum / n - 0.5) < 5e-3);
}

TEST_CASE("below is in range and roughly uniform") {
  cdu::Rng rng(7);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) ++counts[rng.below(6)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  CHECK_THROWS(rng.below(0));
}

TEST_CASE("normal has mean 0 and variance 1") {
  cdu::Rng rng(3);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("rademacher draws are +-1 with balanced signs") {
  cdu::Rng rng(9);
  int plus = 0;
  for (int i = 0; i < 10000; ++i) {
    const double z = rng.rademacher();
    REQUIRE((z == 1.0 || z == -1.0));
    plus += z > 0 ? 1 : 0;
  }
  CHECK(std::abs(plus - 5000) < 300);
}

TEST_CASE("shuffle is a permutation and deterministic") {
  std::vector<int> a(50), b(50);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), 0);
  cdu::Rng r1(11), r2(11);
  r1.shuffle(std::span(a));
  r2.shuffle(std::span(b));
  CHECK(a == b);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("derive_seed separates streams") {
  CHECK(cdu::derive_seed(1, 0) != cdu::derive_seed(1, 1));
  CHECK(cdu::derive_seed(1, 0) != cdu::derive_seed(2, 0));
  CHECK(cdu::derive_seed(5, 3) == cdu::derive_seed(5, 3));
}
