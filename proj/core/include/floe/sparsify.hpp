#ifndef FLOE_SPARSIFY_HPP
#define FLOE_SPARSIFY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "floe/la.hpp"
#include "floe/rng.hpp"

// Magnitude thresholding of intermediate activations and the empirical-CDF
// calibration that picks per-expert thresholds hitting a target sparsity.
// Thresholding keeps on equality (|a| >= t), so t = 0 keeps everything.

namespace floe {

// mask[i] = |v[i]| >= threshold.
std::vector<std::uint8_t> sparsity_mask(const float *v, std::size_t n,
                                        float threshold);
std::vector<std::uint8_t> sparsity_mask(const Vec &v, float threshold);

// out[i] = a[i] if |a[i]| >= t else 0; t must be nonnegative.
Vec apply_sparsity(const Vec &a, float t);

// Fraction of kept entries.
double realized_density(const std::vector<std::uint8_t> &mask);
double realized_density(const Vec &a, float t);

// Empirical quantile rule: with samples' magnitudes sorted ascending,
// returns s[ceil(k*N)-1] for target sparsity k in (0,1], and 0 for k == 0
// (keep everything). Takes magnitudes by value since it must sort.
float calibrate_threshold(std::vector<float> magnitudes, double k);

// Bounded uniform sample of a stream (Algorithm R), deterministic given the
// (seed, stream) pair and the order samples are offered. Work sharded across
// workers must merge shards in a fixed order before feeding the reservoir.
class SampleReservoir {
 public:
  SampleReservoir(std::size_t cap, std::uint64_t seed, std::uint64_t stream)
      : cap_(cap), rng_(seed, stream) {}
  void add(float magnitude);
  const std::vector<float> &samples() const { return samples_; }
  std::uint64_t seen() const { return seen_; }

 private:
  std::size_t cap_;
  Rng rng_;
  std::uint64_t seen_ = 0;
  std::vector<float> samples_;
};

inline constexpr std::size_t kReservoirCap = 1u << 16;

// |a_up| magnitudes collected per (layer, expert) from dense forward passes.
struct ActivationSampleSet {
  std::uint32_t layers = 0;
  std::uint32_t experts = 0;
  std::vector<std::vector<float>> samples;  // [layer * experts + expert]

  ActivationSampleSet() = default;
  ActivationSampleSet(std::uint32_t l, std::uint32_t e)
      : layers(l), experts(e), samples(static_cast<std::size_t>(l) * e) {}
  std::vector<float> &at(std::uint32_t layer, std::uint32_t expert);
  const std::vector<float> &at(std::uint32_t layer, std::uint32_t expert) const;
};

// Mean cosine similarity between hidden states entering consecutive MoE
// layers; entry i covers the transition layer i -> i+1.
struct SimilarityReport {
  std::vector<double> mean_cosine;  // layers-1 entries
  std::uint64_t tokens = 0;
};

// Calibrated thresholds for every (layer, expert), with the sparsity target
// they were calibrated for. CSV schema: layer,expert,threshold,target_sparsity.
struct ThresholdTable {
  std::uint32_t layers = 0;
  std::uint32_t experts = 0;
  std::vector<float> threshold;  // [layer * experts + expert]
  std::vector<float> target;     // same indexing

  ThresholdTable() = default;
  ThresholdTable(std::uint32_t l, std::uint32_t e)
      : layers(l), experts(e), threshold(static_cast<std::size_t>(l) * e, 0.0f),
        target(static_cast<std::size_t>(l) * e, 0.0f) {}

  float at(std::uint32_t layer, std::uint32_t expert) const;
  void set(std::uint32_t layer, std::uint32_t expert, float t, float k);
  void save(const std::string &path) const;
  static ThresholdTable load(const std::string &path);
};

// Per-expert empirical-quantile calibration over the collected samples.
// Errors if any expert has no samples.
ThresholdTable calibrate(const ActivationSampleSet &samples, double k);

}  // namespace floe

#endif
