#ifndef FLOE_QUANT_HPP
#define FLOE_QUANT_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "floe/la.hpp"

// Group-wise asymmetric min-max quantization to 2/4/8-bit codes with f16
// scale/zero metadata, plus a fused dequantize-and-dot kernel. The scale and
// zero point are rounded to f16 *before* codes are computed, so the stored
// metadata is exactly what the codes were fit against; this keeps the
// round-trip error bound at scale/2 plus only the clamping slack from
// rounding the group min/max, and makes quantize(dequantize(q)) reproduce
// the codes.

namespace floe {

struct QuantizedTensor {
  std::size_t n = 0;            // element count
  unsigned bits = 0;            // one of {1, 2, 3, 4, 8}
  std::uint32_t group_size = 0; // consecutive elements per metadata group
  std::vector<std::uint8_t> codes;       // bit-packed, little-endian in-byte
  std::vector<std::uint16_t> scales;     // f16 bit patterns, one per group
  std::vector<std::uint16_t> zeros;      // f16 bit patterns, one per group

  std::size_t num_groups() const { return n / group_size; }
  // Packed code bytes, plus the f16 scale/zero metadata when requested.
  std::size_t stored_bytes(bool include_metadata = true) const;
};

std::size_t packed_code_bytes(std::size_t n, unsigned bits);

// group_size must divide n; bits must be one of {1,2,3,4,8}; input must be
// finite.
QuantizedTensor quantize(const float *x, std::size_t n, unsigned bits,
                         std::uint32_t group_size);
QuantizedTensor quantize(const Vec &x, unsigned bits, std::uint32_t group_size);

std::uint32_t get_code(const QuantizedTensor &q, std::size_t i);
float dequantize_at(const QuantizedTensor &q, std::size_t i);
void dequantize(const QuantizedTensor &q, float *out);
Vec dequantize(const QuantizedTensor &q);

// y[c] = sum_k deq(q[c*ch_len + k]) * x[k] for c in [0, n/ch_len): the
// quantized tensor is treated as ch-major (each channel's weights
// contiguous). Performs the identical f32 operations in the identical order
// as dequantize-then-gemv, so results are bit-equal to that reference.
void qgemv_channels(const QuantizedTensor &q, std::size_t ch_len,
                    const float *x, float *y);

// Footprint model for one expert compressed to `bits` codes for the up
// projection plus a density-fraction of fp16 gate/down channels kept hot.
// Returns dense_fp16_bytes / compressed_bytes.
double compression_ratio(std::size_t d_hidden, std::size_t d_intermediate,
                         unsigned bits, std::uint32_t group_size,
                         double hot_density, bool include_metadata);

}  // namespace floe

#endif
