#include <atomic>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "floe/rng.hpp"

using namespace floe;

TEST_SUITE("rng") {

TEST_CASE("identical (seed, stream) pairs replay the same sequence") {
  Rng a(42, 7), b(42, 7);
  for (int i = 0; i < 64; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("streams with the same seed are distinct") {
  Rng a(42, 0), b(42, 1);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}

TEST_CASE("uniform stays in [0, 1) and uniform_pos excludes zero") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    double p = rng.uniform_pos();
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("normal sample moments match the standard normal") {
  Rng rng(2);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  double mean = s / n, var = s2 / n - mean * mean;
  CHECK(std::fabs(mean) <= 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::fabs(var - 1.0) <= 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("exponential has mean 1/lambda") {
  Rng rng(3);
  const int n = 200000;
  const double lambda = 11.0;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = rng.exponential(lambda);
    CHECK(x >= 0.0);
    s += x;
  }
  // SE of the mean is 1/(lambda*sqrt(n)).
  CHECK(std::fabs(s / n - 1.0 / lambda) <=
        4.0 / (lambda * std::sqrt(static_cast<double>(n))));
}

TEST_CASE("below draws cover [0, n) roughly uniformly") {
  Rng rng(4);
  const std::uint64_t n = 8;
  std::vector<int> counts(n, 0);
  const int draws = 80000;
  for (int i = 0; i < draws; ++i) {
    std::uint64_t v = rng.below(n);
    REQUIRE(v < n);
    counts[v]++;
  }
  for (int c : counts) {
    CHECK(c > draws / static_cast<int>(n) - 600);
    CHECK(c < draws / static_cast<int>(n) + 600);
  }
}

TEST_CASE("mix64 separates nearby inputs") {
  CHECK(mix64(1) != mix64(2));
  CHECK(mix64(0) != 0);
}

TEST_CASE("parallel_shards hits every shard exactly once at any width") {
  for (unsigned workers : {1u, 2u, 5u}) {
    std::vector<std::atomic<int>> hits(kLogicalShards);
    for (auto &h : hits) h = 0;
    parallel_shards(kLogicalShards, workers,
                    [&](std::uint64_t s) { hits[s]++; });
    for (auto &h : hits) CHECK(h == 1);
  }
}

TEST_CASE("sharded accumulation is worker-count independent") {
  auto run = [](unsigned workers) {
    std::vector<double> slot(kLogicalShards, 0.0);
    parallel_shards(kLogicalShards, workers, [&](std::uint64_t s) {
      Rng rng(9, s);
      double acc = 0.0;
      for (int i = 0; i < 1000; ++i) acc += rng.normal();
      slot[s] = acc;
    });
    double total = 0.0;
    for (double v : slot) total += v;
    return total;
  };
  double t1 = run(1);
  CHECK(run(3) == t1);
  CHECK(run(8) == t1);
}

}  // TEST_SUITE("rng")
