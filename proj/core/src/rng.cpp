#include "floe/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <vector>

namespace floe {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  // Distinct odd increments put streams on (mostly) disjoint orbits; the
  // starting state additionally mixes seed and stream so nearby pairs do
  // not correlate.
  gamma_ = mix64(stream * 2 + 1) | 1ULL;
  state_ = mix64(seed ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

std::uint64_t Rng::next_u64() {
  state_ += gamma_;
  return mix64(state_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_pos() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform_pos();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::exponential(double lambda) {
  if (lambda <= 0.0) throw std::runtime_error("exponential: lambda must be > 0");
  return -std::log(uniform_pos()) / lambda;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::runtime_error("below: n must be positive");
  // Rejection-free modulo is fine here: n is tiny relative to 2^64 in all
  // call sites, and determinism matters more than the ~n/2^64 bias.
  return next_u64() % n;
}

void parallel_shards(std::uint64_t shards, unsigned workers,
                     const std::function<void(std::uint64_t)> &fn) {
  if (workers <= 1 || shards <= 1) {
    for (std::uint64_t s = 0; s < shards; ++s) fn(s);
    return;
  }
  std::atomic<std::uint64_t> next{0};
  auto body = [&]() {
    for (;;) {
      std::uint64_t s = next.fetch_add(1);
      if (s >= shards) return;
      fn(s);
    }
  };
  unsigned n = std::min<std::uint64_t>(workers, shards);
  std::vector<std::thread> pool;
  pool.reserve(n - 1);
  for (unsigned i = 1; i < n; ++i) pool.emplace_back(body);
  body();
  for (auto &t : pool) t.join();
}

}  // namespace floe
