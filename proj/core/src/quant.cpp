#include "floe/quant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "floe/io.hpp"

namespace floe {

static void check_bits(unsigned bits) {
  if (bits != 1 && bits != 2 && bits != 3 && bits != 4 && bits != 8)
    throw std::runtime_error("quantize: bits must be one of {1,2,3,4,8}");
}

std::size_t packed_code_bytes(std::size_t n, unsigned bits) {
  return (n * bits + 7) / 8;
}

std::size_t QuantizedTensor::stored_bytes(bool include_metadata) const {
  std::size_t total = codes.size();
  if (include_metadata) total += 2 * scales.size() + 2 * zeros.size();
  return total;
}

// Codes may straddle a byte boundary for bits=3.
static void put_code(std::vector<std::uint8_t> &codes, unsigned bits,
                     std::size_t i, std::uint32_t c) {
  std::size_t bit = i * bits;
  std::size_t idx = bit / 8, off = bit % 8;
  codes[idx] |= static_cast<std::uint8_t>(c << off);
  if (off + bits > 8) codes[idx + 1] |= static_cast<std::uint8_t>(c >> (8 - off));
}

std::uint32_t get_code(const QuantizedTensor &q, std::size_t i) {
  std::size_t bit = i * q.bits;
  std::size_t idx = bit / 8, off = bit % 8;
  std::uint32_t v = static_cast<std::uint32_t>(q.codes[idx]) >> off;
  if (off + q.bits > 8) v |= static_cast<std::uint32_t>(q.codes[idx + 1]) << (8 - off);
  return v & ((1u << q.bits) - 1);
}

QuantizedTensor quantize(const float *x, std::size_t n, unsigned bits,
                         std::uint32_t group_size) {
  check_bits(bits);
  if (group_size == 0 || n % group_size != 0)
    throw std::runtime_error("quantize: group_size must divide element count");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) throw std::runtime_error("quantize: non-finite input");

  QuantizedTensor q;
  q.n = n;
  q.bits = bits;
  q.group_size = group_size;
  q.codes.assign(packed_code_bytes(n, bits), 0);
  std::size_t groups = n / group_size;
  q.scales.resize(groups);
  q.zeros.resize(groups);

  const float levels = static_cast<float>((1u << bits) - 1);
  for (std::size_t g = 0; g < groups; ++g) {
    const float *src = x + g * group_size;
    float lo = src[0], hi = src[0];
    for (std::size_t k = 1; k < group_size; ++k) {
      lo = std::min(lo, src[k]);
      hi = std::max(hi, src[k]);
    }
    // Round metadata to its stored precision first, then fit codes to it.
    // Degenerate groups (or ranges below f16 resolution) take scale 1 so the
    // scale stays positive; their codes collapse to 0 and dequantize to the
    // zero point.
    std::uint16_t zero16 = f32_to_f16(lo);
    std::uint16_t scale16 = f32_to_f16((hi - lo) / levels);
    if (f16_to_f32(scale16) <= 0.0f) scale16 = f32_to_f16(1.0f);
    q.zeros[g] = zero16;
    q.scales[g] = scale16;
    float zero = f16_to_f32(zero16);
    float scale = f16_to_f32(scale16);
    for (std::size_t k = 0; k < group_size; ++k) {
      float t = std::nearbyint((src[k] - zero) / scale);
      auto c = static_cast<std::uint32_t>(std::clamp(t, 0.0f, levels));
      put_code(q.codes, bits, g * group_size + k, c);
    }
  }
  return q;
}

QuantizedTensor quantize(const Vec &x, unsigned bits, std::uint32_t group_size) {
  return quantize(x.data(), x.size(), bits, group_size);
}

// Trailing bits past the last code must be zero; anything else means the
// packing is corrupt (truncated or misaligned).
static void validate_packing(const QuantizedTensor &q) {
  std::size_t used_bits = q.n * q.bits;
  if (q.codes.size() != packed_code_bytes(q.n, q.bits))
    throw std::runtime_error("quantized tensor: code buffer size mismatch");
  if (used_bits % 8 != 0) {
    std::uint8_t tail = q.codes.back() >> (used_bits % 8);
    if (tail != 0) throw std::runtime_error("quantized tensor: corrupt packing");
  }
}

float dequantize_at(const QuantizedTensor &q, std::size_t i) {
  std::size_t g = i / q.group_size;
  float scale = f16_to_f32(q.scales[g]);
  float zero = f16_to_f32(q.zeros[g]);
  return static_cast<float>(get_code(q, i)) * scale + zero;
}

void dequantize(const QuantizedTensor &q, float *out) {
  validate_packing(q);
  for (std::size_t i = 0; i < q.n; ++i) out[i] = dequantize_at(q, i);
}

Vec dequantize(const QuantizedTensor &q) {
  Vec out(q.n);
  dequantize(q, out.data());
  return out;
}

void qgemv_channels(const QuantizedTensor &q, std::size_t ch_len,
                    const float *x, float *y) {
  if (ch_len == 0 || q.n % ch_len != 0)
    throw std::runtime_error("qgemv_channels: ch_len must divide element count");
  std::size_t channels = q.n / ch_len;
  for (std::size_t c = 0; c < channels; ++c) {
    float acc = 0.0f;
    for (std::size_t k = 0; k < ch_len; ++k) {
      // Same expression as dequantize_at so the result is bit-equal to
      // dequantize-then-gemv.
      acc += dequantize_at(q, c * ch_len + k) * x[k];
    }
    y[c] = acc;
  }
}

double compression_ratio(std::size_t d_hidden, std::size_t d_intermediate,
                         unsigned bits, std::uint32_t group_size,
                         double hot_density, bool include_metadata) {
  check_bits(bits);
  std::size_t n = d_hidden * d_intermediate;
  double dense = 3.0 * static_cast<double>(n) * 2.0;  // three fp16 projections
  double compressed = static_cast<double>(packed_code_bytes(n, bits));
  if (include_metadata)
    compressed += 4.0 * static_cast<double>(n / group_size);  // f16 scale+zero
  // Hot gate/down channels resident in fp16.
  auto hot = static_cast<double>(
      std::llround(hot_density * static_cast<double>(d_intermediate)));
  compressed += 2.0 * hot * static_cast<double>(d_hidden) * 2.0;
  return dense / compressed;
}

}  // namespace floe
