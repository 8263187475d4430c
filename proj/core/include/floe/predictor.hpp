#ifndef FLOE_PREDICTOR_HPP
#define FLOE_PREDICTOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "floe/la.hpp"
#include "floe/model.hpp"
#include "floe/quant.hpp"

// Expert-set and channel-mask prediction. The inter-expert predictor is a
// per-layer linear map trained with one-vs-all logistic regression on
// (hidden state entering layer i-1's MoE block, experts activated at layer
// i) pairs. The intra-expert predictor is parameter-free: it reuses the
// previous block input against the next layer's quantized up projection.

namespace floe {

struct InterExpertPredictor {
  std::uint32_t layers = 0;    // model depth; maps exist for targets 1..layers-1
  std::uint32_t experts = 0;
  std::uint32_t d_hidden = 0;
  std::vector<Matrix> w;  // [target-1] -> experts x d_hidden
  std::vector<Vec> b;     // [target-1] -> experts

  // File format: magic "FLOP", version u32=1, layers/experts/d_hidden u32,
  // then per target layer the map row-major f32 followed by the bias.
  void save(const std::string &path) const;
  static InterExpertPredictor load(const std::string &path);
};

// Supervised pairs for one routing problem: x[i] is the input observed one
// layer ahead of labels[i], the activated expert set (ascending indices).
struct RoutingDataset {
  std::uint32_t experts = 0;
  std::uint32_t d_hidden = 0;
  std::uint32_t top_k = 0;
  std::vector<Vec> x;
  std::vector<std::vector<std::uint32_t>> labels;
};

// Per-target-layer datasets collected from dense forward passes over a
// seeded token stream; entry [i] targets layer i+1.
std::vector<RoutingDataset> build_routing_trace(const MoEModel &m,
                                                std::uint64_t seed,
                                                std::uint64_t tokens);

struct TrainOptions {
  double lr = 1.0;
  std::uint32_t epochs = 2000;
};

// Full-batch gradient descent on one-vs-all logistic loss, zero-initialized
// (no RNG). Returns the mean loss per epoch, including the initial loss at
// index 0, so callers can assert it never increases.
struct SingleLayerFit {
  Matrix w;  // experts x d_hidden
  Vec b;
  std::vector<double> loss;  // epochs+1 entries
};
SingleLayerFit train_logistic_ova(const RoutingDataset &data,
                                  const TrainOptions &opt);

struct TrainReport {
  InterExpertPredictor predictor;
  std::vector<std::vector<double>> loss;  // per target layer
};
TrainReport train_inter(const MoEModel &m,
                        const std::vector<RoutingDataset> &trace,
                        const TrainOptions &opt);

// Top-score expert indices (ascending, ties toward lower index) for target
// `layer` in [1, layers). Layer 0 has no lookahead and is an error.
std::vector<std::uint32_t> predict_experts(const InterExpertPredictor &p,
                                           const Vec &x, std::uint32_t layer,
                                           std::uint32_t prefetch_count);

// Reuse-based channel mask: |qgemv(up_next, x_prev)| >= t. Parameter-free.
std::vector<std::uint8_t> predict_mask(const QuantizedTensor &up_next,
                                       std::uint32_t d_hidden, const Vec &x_prev,
                                       float t);

struct PredictionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  std::uint64_t samples = 0;
};

// Macro-averaged per-sample precision/recall. Empty prediction has
// precision 1 when the truth is also empty, else 0; empty truth has
// recall 1.
PredictionMetrics eval_sets(const std::vector<std::vector<std::uint32_t>> &pred,
                            const std::vector<std::vector<std::uint32_t>> &truth);
PredictionMetrics eval_masks(const std::vector<std::vector<std::uint8_t>> &pred,
                             const std::vector<std::vector<std::uint8_t>> &truth);

// Synthetic routing problems for construction tests. The realizable variant
// routes standard-normal tokens through a random linear router and keeps
// only tokens whose k-th/(k+1)-th logit gap is at least `margin`, so a
// linear predictor can fit the labels. The chance variant draws labels
// independently of the inputs.
RoutingDataset synthetic_routing_dataset(std::uint64_t seed,
                                         std::uint32_t d_hidden,
                                         std::uint32_t experts,
                                         std::uint32_t top_k,
                                         std::size_t count, float margin);
RoutingDataset chance_routing_dataset(std::uint64_t seed, std::uint32_t d_hidden,
                                      std::uint32_t experts, std::uint32_t top_k,
                                      std::size_t count);

// Mean reuse-mask recall measured against true masks on a drift-controlled
// model: the whole residual update is scaled by eps, and thresholds are
// recalibrated per eps. eps = 0 freezes the hidden state, so recall is
// exactly 1.
struct DriftPoint {
  float eps = 0.0f;
  double recall = 0.0;
};
std::vector<DriftPoint> reuse_drift_recalls(const MoEModel &m,
                                            const std::vector<float> &eps_list,
                                            double sparsity_k,
                                            std::uint64_t seed,
                                            std::uint64_t calib_tokens,
                                            std::uint64_t eval_tokens);

// Per-layer reuse-mask metrics at one drift scale, for CSV reporting;
// entry i covers the transition into layer i+1.
std::vector<PredictionMetrics> reuse_mask_metrics(const MoEModel &m,
                                                  float drift_scale,
                                                  double sparsity_k,
                                                  std::uint64_t seed,
                                                  std::uint64_t calib_tokens,
                                                  std::uint64_t eval_tokens);

// Device-memory cost of the alternatives discussed alongside the reuse
// predictor: a low-rank learned channel predictor and a sign-bit cache.
std::uint64_t learned_predictor_footprint(std::uint64_t d_hidden,
                                          std::uint64_t d_intermediate,
                                          std::uint64_t rank,
                                          std::uint64_t blocks);
std::uint64_t sign_bit_footprint(std::uint64_t d_intermediate,
                                 std::uint64_t states, std::uint64_t blocks);

}  // namespace floe

#endif
