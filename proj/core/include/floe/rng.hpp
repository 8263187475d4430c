#ifndef FLOE_RNG_HPP
#define FLOE_RNG_HPP

#include <cstdint>
#include <functional>

// Deterministic counter-seeded random streams. The standard <random>
// distributions are implementation-defined, which would break the
// byte-identical-artifacts guarantee, so sampling is hand-rolled on top of
// SplitMix64. Each (seed, stream) pair yields an independent sequence; work
// is sharded over fixed logical streams so results do not depend on thread
// count or traversal order.

namespace floe {

// SplitMix64 finalizer; also used on its own for stable integer hashing.
std::uint64_t mix64(std::uint64_t x);

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  double uniform();      // [0, 1)
  double uniform_pos();  // (0, 1), safe for log()
  double normal();       // standard normal, Box-Muller
  float normal_f() { return static_cast<float>(normal()); }
  double exponential(double lambda);  // rate parameterization
  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
  std::uint64_t gamma_;  // odd per-stream increment, SplitMix "split" style
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Number of logical shards used to parallelize generation deterministically.
inline constexpr std::uint64_t kLogicalShards = 64;

// Runs fn(shard) for shard in [0, shards) on up to `workers` threads.
// Callers give each shard its own random stream and disjoint output, so the
// result is identical for any worker count.
void parallel_shards(std::uint64_t shards, unsigned workers,
                     const std::function<void(std::uint64_t)> &fn);

}  // namespace floe

#endif
