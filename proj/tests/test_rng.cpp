#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "auscult/rng.hpp"

using auscult::Rng;

TEST_CASE("same seed replays the same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(a.uniform() == b.uniform());
    REQUIRE(a.normal(0.0, 1.0) == b.normal(0.0, 1.0));
    REQUIRE(a.uniform_int(1000) == b.uniform_int(1000));
  }
}

TEST_CASE("uniform stays in [0, 1)") {
  Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("uniform_int covers the range") {
  Rng rng(3);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 100000; ++i) counts[rng.uniform_int(10)]++;
  for (int c : counts) REQUIRE(c > 9000);
}

TEST_CASE("normal moments match") {
  Rng rng(11);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal(1.5, 2.0);
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  REQUIRE(std::abs(mean - 1.5) < 0.02);
  REQUIRE(std::abs(std::sqrt(var) - 2.0) < 0.02);
}

TEST_CASE("normal with zero stddev is exactly the mean") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) REQUIRE(rng.normal(0.25, 0.0) == 0.25);
}

TEST_CASE("forks are independent of parent position") {
  Rng a(9);
  Rng fork_before = a.fork(1);
  a.uniform();
  a.uniform();
  Rng fork_after = a.fork(1);
  REQUIRE(fork_before.uniform() == fork_after.uniform());

  Rng b(9);
  REQUIRE(b.fork(1).uniform() != b.fork(2).uniform());
}

TEST_CASE("from_parts is a pure function of its arguments") {
  REQUIRE(Rng::from_parts(1, 2, 3).uniform() == Rng::from_parts(1, 2, 3).uniform());
  REQUIRE(Rng::from_parts(1, 2, 3).uniform() != Rng::from_parts(1, 2, 4).uniform());
}
