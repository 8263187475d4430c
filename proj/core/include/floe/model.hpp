#ifndef FLOE_MODEL_HPP
#define FLOE_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "floe/la.hpp"
#include "floe/quant.hpp"
#include "floe/sparsify.hpp"

// Synthetic mixture-of-experts models: SwiGLU experts, top-k routing, a
// linear mixing stand-in for attention, dense and threshold-sparse forward
// passes, hybrid compression (quantized up projection + contextual
// gate/down sparsity), and the on-disk formats.
//
// Weight storage keeps each intermediate channel contiguous: gate and up
// hold the d_hidden x d_intermediate projections column-major (channel i's
// input weights at [i*d_hidden, (i+1)*d_hidden)), and down_t holds the
// transposed down projection row-major (channel i's output weights in the
// same range). The sparse kernel therefore touches only the masked
// channels' memory.

namespace floe {

struct MoEConfig {
  std::uint32_t layers = 0;
  std::uint32_t experts = 0;
  std::uint32_t top_k = 0;
  std::uint32_t d_hidden = 0;
  std::uint32_t d_intermediate = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ExpertWeights {
  std::uint32_t d_hidden = 0;
  std::uint32_t d_intermediate = 0;
  Vec gate;    // column-major d_hidden x d_intermediate
  Vec up;      // column-major d_hidden x d_intermediate
  Vec down_t;  // row-major d_intermediate x d_hidden

  const float *gate_ch(std::size_t i) const { return gate.data() + i * d_hidden; }
  const float *up_ch(std::size_t i) const { return up.data() + i * d_hidden; }
  const float *down_ch(std::size_t i) const { return down_t.data() + i * d_hidden; }
};

struct MoELayer {
  Matrix router;  // experts x d_hidden; logits = router * h
  Matrix mixing;  // d_hidden x d_hidden; applied as mixing * h
  std::vector<ExpertWeights> experts;
};

struct MoEModel {
  MoEConfig cfg;
  std::vector<MoELayer> layers;
};

struct CompressedExpert {
  std::uint32_t d_hidden = 0;
  std::uint32_t d_intermediate = 0;
  QuantizedTensor up_q;  // channel-major, like ExpertWeights::up
  Vec gate;              // dense f32, channel-major
  Vec down_t;            // dense f32, channel-major
  float threshold = 0.0f;

  const float *gate_ch(std::size_t i) const { return gate.data() + i * d_hidden; }
  const float *down_ch(std::size_t i) const { return down_t.data() + i * d_hidden; }
};

struct CompressedLayer {
  Matrix router;
  Matrix mixing;
  std::vector<CompressedExpert> experts;
};

struct CompressedModel {
  MoEConfig cfg;
  unsigned bits = 0;
  std::uint32_t group_size = 0;
  std::vector<CompressedLayer> layers;
};

// Deterministic Gaussian model: every weight ~ N(0, 1/d_hidden), generated
// on fixed per-(layer, tensor, expert, shard) streams so the result is
// byte-identical for any worker count.
MoEModel gen_model(const MoEConfig &cfg, unsigned workers = 1);

// Token t of the synthetic decode stream: d_hidden iid standard normals on
// a per-token stream.
Vec token_input(std::uint64_t seed, std::uint64_t t, std::uint32_t d_hidden);

struct RouteResult {
  std::vector<std::uint32_t> experts;  // ascending indices, top_k of them
  Vec weights;                         // softmax over selected logits, aligned
};

RouteResult route(const Matrix &router, const Vec &h, std::uint32_t top_k);

// Dense SwiGLU expert: (silu(h.gate) * (h.up)) . down, accumulated channel
// by channel in ascending order.
Vec expert_forward(const ExpertWeights &e, const Vec &h);

// Threshold-sparse expert on float weights: v = h.up computed densely, then
// only channels with |v| >= t touch gate/down memory.
Vec expert_forward_sparse(const ExpertWeights &e, const Vec &h, float t);

// Same kernel over the compressed expert: v comes from the quantized up
// projection, gate/down stay dense f32.
Vec expert_forward_sparse(const CompressedExpert &e, const Vec &h);

// One MoE block: u = h + drift_scale*(mixing*h); routing and experts read u;
// returns u + drift_scale * sum_j w_j * expert_j(u). drift_scale 1 is the
// plain model; smaller values slow hidden-state drift for predictor studies.
Vec layer_forward(const MoEModel &m, std::uint32_t layer, const Vec &h,
                  float drift_scale = 1.0f);
Vec layer_forward(const CompressedModel &m, std::uint32_t layer, const Vec &h);

// Per-layer details of a sparse forward, for the offload simulator.
struct LayerTrace {
  Vec block_input;                 // u, the vector routing and experts read
  std::vector<std::uint32_t> experts;
  Vec weights;
  std::vector<std::vector<std::uint8_t>> masks;  // per selected expert
  Vec out;
};
LayerTrace layer_forward_traced(const CompressedModel &m, std::uint32_t layer,
                                const Vec &h);

CompressedExpert compress_expert(const ExpertWeights &e, unsigned bits,
                                 std::uint32_t group_size, float threshold);
CompressedModel compress_model(const MoEModel &m, const ThresholdTable &t,
                               unsigned bits, std::uint32_t group_size);

// Dense forward passes over a seeded token stream, recording |a_up| samples
// per visited expert (uniform reservoir per (layer, expert), capped) and the
// cosine similarity of hidden states entering consecutive MoE blocks.
struct StatsReport {
  ActivationSampleSet samples;
  SimilarityReport similarity;
};
StatsReport collect_stats(const MoEModel &m, std::uint64_t seed,
                          std::uint64_t tokens, std::size_t sample_cap,
                          unsigned workers = 1, float drift_scale = 1.0f);

// collect_stats + empirical-quantile calibration at sparsity k.
ThresholdTable calibrate_model(const MoEModel &m, std::uint64_t seed,
                               std::uint64_t tokens, double k,
                               std::size_t sample_cap = kReservoirCap,
                               unsigned workers = 1, float drift_scale = 1.0f);

// Binary formats. The dense model file starts with magic "FLOE", format
// version u32=1, then layers, experts, top_k, d_hidden, d_intermediate as
// u32 and seed as u64; per layer: router, mixing, then per expert gate, up,
// down_t, each as raw little-endian f32 in the storage order above. The
// compressed file uses magic "FLOQ" and the same header plus bits u8 and
// group_size u32; each expert carries packed up codes, f16 scales and
// zeros, dense f32 gate and down_t, and its f32 threshold.
void save_model(const MoEModel &m, const std::string &path);
MoEModel load_model(const std::string &path);
void save_compressed(const CompressedModel &m, const std::string &path);
CompressedModel load_compressed(const std::string &path);

// Exact file sizes implied by the formats, for arithmetic checks.
std::uint64_t model_file_size(const MoEConfig &cfg);
std::uint64_t compressed_file_size(const MoEConfig &cfg, unsigned bits,
                                   std::uint32_t group_size);

}  // namespace floe

#endif
