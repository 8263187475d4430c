#include "floe/sparsify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "floe/io.hpp"

namespace floe {

std::vector<std::uint8_t> sparsity_mask(const float *v, std::size_t n,
                                        float threshold) {
  std::vector<std::uint8_t> mask(n);
  for (std::size_t i = 0; i < n; ++i)
    mask[i] = std::fabs(v[i]) >= threshold ? 1 : 0;
  return mask;
}

std::vector<std::uint8_t> sparsity_mask(const Vec &v, float threshold) {
  return sparsity_mask(v.data(), v.size(), threshold);
}

Vec apply_sparsity(const Vec &a, float t) {
  if (t < 0.0f) throw std::runtime_error("apply_sparsity: negative threshold");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = std::fabs(a[i]) >= t ? a[i] : 0.0f;
  return out;
}

double realized_density(const std::vector<std::uint8_t> &mask) {
  if (mask.empty()) return 0.0;
  std::size_t kept = 0;
  for (auto m : mask) kept += m;
  return static_cast<double>(kept) / static_cast<double>(mask.size());
}

double realized_density(const Vec &a, float t) {
  return realized_density(sparsity_mask(a, t));
}

float calibrate_threshold(std::vector<float> magnitudes, double k) {
  if (k < 0.0 || k > 1.0)
    throw std::runtime_error("calibrate_threshold: k must be in [0,1]");
  if (k == 0.0) return 0.0f;
  if (magnitudes.empty())
    throw std::runtime_error("calibrate_threshold: no samples");
  std::sort(magnitudes.begin(), magnitudes.end());
  auto n = static_cast<double>(magnitudes.size());
  auto rank = static_cast<std::size_t>(std::ceil(k * n));
  if (rank == 0) rank = 1;
  if (rank > magnitudes.size()) rank = magnitudes.size();
  return magnitudes[rank - 1];
}

void SampleReservoir::add(float magnitude) {
  seen_++;
  if (samples_.size() < cap_) {
    samples_.push_back(magnitude);
    return;
  }
  std::uint64_t j = rng_.below(seen_);
  if (j < cap_) samples_[j] = magnitude;
}

std::vector<float> &ActivationSampleSet::at(std::uint32_t layer,
                                            std::uint32_t expert) {
  if (layer >= layers || expert >= experts)
    throw std::runtime_error("ActivationSampleSet: index out of range");
  return samples[static_cast<std::size_t>(layer) * experts + expert];
}

const std::vector<float> &ActivationSampleSet::at(std::uint32_t layer,
                                                  std::uint32_t expert) const {
  if (layer >= layers || expert >= experts)
    throw std::runtime_error("ActivationSampleSet: index out of range");
  return samples[static_cast<std::size_t>(layer) * experts + expert];
}

float ThresholdTable::at(std::uint32_t layer, std::uint32_t expert) const {
  if (layer >= layers || expert >= experts)
    throw std::runtime_error("ThresholdTable: index out of range");
  return threshold[static_cast<std::size_t>(layer) * experts + expert];
}

void ThresholdTable::set(std::uint32_t layer, std::uint32_t expert, float t,
                         float k) {
  if (layer >= layers || expert >= experts)
    throw std::runtime_error("ThresholdTable: index out of range");
  std::size_t i = static_cast<std::size_t>(layer) * experts + expert;
  threshold[i] = t;
  target[i] = k;
}

void ThresholdTable::save(const std::string &path) const {
  Csv csv;
  csv.header = {"layer", "expert", "threshold", "target_sparsity"};
  for (std::uint32_t l = 0; l < layers; ++l)
    for (std::uint32_t e = 0; e < experts; ++e) {
      std::size_t i = static_cast<std::size_t>(l) * experts + e;
      csv.rows.push_back({std::to_string(l), std::to_string(e),
                          format_f32(threshold[i]), format_f32(target[i])});
    }
  csv.save(path);
}

ThresholdTable ThresholdTable::load(const std::string &path) {
  Csv csv = Csv::load(path);
  if (csv.header != std::vector<std::string>{"layer", "expert", "threshold",
                                             "target_sparsity"})
    throw std::runtime_error("ThresholdTable: unexpected CSV header in " + path);
  std::uint32_t layers = 0, experts = 0;
  for (const auto &row : csv.rows) {
    layers = std::max(layers, static_cast<std::uint32_t>(std::stoul(row[0])) + 1);
    experts = std::max(experts, static_cast<std::uint32_t>(std::stoul(row[1])) + 1);
  }
  ThresholdTable t(layers, experts);
  for (const auto &row : csv.rows) {
    if (row.size() != 4)
      throw std::runtime_error("ThresholdTable: malformed row in " + path);
    t.set(static_cast<std::uint32_t>(std::stoul(row[0])),
          static_cast<std::uint32_t>(std::stoul(row[1])), std::stof(row[2]),
          std::stof(row[3]));
  }
  return t;
}

ThresholdTable calibrate(const ActivationSampleSet &samples, double k) {
  if (samples.layers == 0 || samples.experts == 0)
    throw std::runtime_error("calibrate: empty sample set");
  ThresholdTable table(samples.layers, samples.experts);
  for (std::uint32_t l = 0; l < samples.layers; ++l)
    for (std::uint32_t e = 0; e < samples.experts; ++e) {
      const auto &s = samples.at(l, e);
      if (s.empty())
        throw std::runtime_error("calibrate: no samples for layer " +
                                 std::to_string(l) + " expert " +
                                 std::to_string(e));
      table.set(l, e, calibrate_threshold(s, k), static_cast<float>(k));
    }
  return table;
}

}  // namespace floe
