#include "floe/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "floe/io.hpp"
#include "floe/rng.hpp"
#include "floe/sparsify.hpp"

namespace floe {

void InterExpertPredictor::save(const std::string &path) const {
  ByteWriter out;
  out.bytes("FLOP", 4);
  out.u32(1);
  out.u32(layers);
  out.u32(experts);
  out.u32(d_hidden);
  for (std::size_t i = 0; i + 1 < layers; ++i) {
    out.f32_array(w[i].data.data(), w[i].size());
    out.f32_array(b[i].data(), b[i].size());
  }
  write_file_atomic(path, out.data());
}

InterExpertPredictor InterExpertPredictor::load(const std::string &path) {
  auto buf = read_file(path);
  ByteReader r(buf);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "FLOP")
    throw std::runtime_error("predictor file: bad magic");
  if (r.u32() != 1) throw std::runtime_error("predictor file: bad version");
  InterExpertPredictor p;
  p.layers = r.u32();
  p.experts = r.u32();
  p.d_hidden = r.u32();
  if (p.layers < 2)
    throw std::runtime_error("predictor file: needs at least two layers");
  p.w.resize(p.layers - 1);
  p.b.resize(p.layers - 1);
  for (std::size_t i = 0; i + 1 < p.layers; ++i) {
    p.w[i] = Matrix(p.experts, p.d_hidden);
    r.f32_array(p.w[i].data.data(), p.w[i].size());
    p.b[i].resize(p.experts);
    r.f32_array(p.b[i].data(), p.b[i].size());
  }
  if (r.remaining() != 0)
    throw std::runtime_error("predictor file: trailing bytes");
  return p;
}

std::vector<RoutingDataset> build_routing_trace(const MoEModel &m,
                                                std::uint64_t seed,
                                                std::uint64_t tokens) {
  if (m.cfg.layers < 2)
    throw std::runtime_error("build_routing_trace: needs >= 2 layers");
  if (tokens == 0) throw std::runtime_error("build_routing_trace: empty trace");
  std::vector<RoutingDataset> trace(m.cfg.layers - 1);
  for (auto &d : trace) {
    d.experts = m.cfg.experts;
    d.d_hidden = m.cfg.d_hidden;
    d.top_k = m.cfg.top_k;
  }
  for (std::uint64_t t = 0; t < tokens; ++t) {
    Vec h = token_input(seed, t, m.cfg.d_hidden);
    Vec prev_u;
    for (std::uint32_t l = 0; l < m.cfg.layers; ++l) {
      // Reproduce layer_forward's block input to pair it with layer l's
      // routing decision.
      Vec mixed;
      gemv(m.layers[l].mixing, h, mixed);
      Vec u(h.size());
      for (std::size_t i = 0; i < h.size(); ++i) u[i] = h[i] + mixed[i];
      RouteResult r = route(m.layers[l].router, u, m.cfg.top_k);
      if (l > 0) {
        trace[l - 1].x.push_back(prev_u);
        trace[l - 1].labels.push_back(r.experts);
      }
      prev_u = u;
      h = layer_forward(m, l, h);
    }
  }
  return trace;
}

SingleLayerFit train_logistic_ova(const RoutingDataset &data,
                                  const TrainOptions &opt) {
  if (data.x.empty()) throw std::runtime_error("train: empty dataset");
  const std::size_t n = data.x.size();
  const std::uint32_t E = data.experts, D = data.d_hidden;

  // Multi-hot targets.
  std::vector<std::uint8_t> y(n * E, 0);
  for (std::size_t s = 0; s < n; ++s)
    for (auto e : data.labels[s]) y[s * E + e] = 1;

  SingleLayerFit fit;
  fit.w = Matrix(E, D);
  fit.b.assign(E, 0.0f);
  fit.loss.reserve(opt.epochs + 1);

  std::vector<double> scores(E);
  Matrix grad_w(E, D);
  std::vector<double> grad_b(E);
  const double inv_n = 1.0 / static_cast<double>(n);

  // One extra pass records the initial loss; epoch e then applies update e.
  for (std::uint32_t epoch = 0; epoch <= opt.epochs; ++epoch) {
    double loss = 0.0;
    std::fill(grad_w.data.begin(), grad_w.data.end(), 0.0f);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const Vec &x = data.x[s];
      for (std::uint32_t e = 0; e < E; ++e) {
        double z = fit.b[e];
        const float *row = fit.w.row(e);
        for (std::uint32_t d = 0; d < D; ++d)
          z += static_cast<double>(row[d]) * x[d];
        double p = 1.0 / (1.0 + std::exp(-z));
        double t = y[s * E + e] ? 1.0 : 0.0;
        // Clamped log keeps the loss finite when p saturates.
        double pt = t > 0.5 ? p : 1.0 - p;
        loss += -std::log(std::max(pt, 1e-300));
        double g = (p - t) * inv_n;
        grad_b[e] += g;
        float *gw = grad_w.row(e);
        for (std::uint32_t d = 0; d < D; ++d)
          gw[d] += static_cast<float>(g * x[d]);
      }
    }
    fit.loss.push_back(loss * inv_n / E);
    if (epoch == opt.epochs) break;
    for (std::uint32_t e = 0; e < E; ++e) {
      fit.b[e] -= static_cast<float>(opt.lr * grad_b[e]);
      float *row = fit.w.row(e);
      const float *gw = grad_w.row(e);
      for (std::uint32_t d = 0; d < D; ++d)
        row[d] -= static_cast<float>(opt.lr) * gw[d];
    }
  }
  return fit;
}

TrainReport train_inter(const MoEModel &m,
                        const std::vector<RoutingDataset> &trace,
                        const TrainOptions &opt) {
  if (trace.size() != m.cfg.layers - 1)
    throw std::runtime_error("train_inter: trace/model layer mismatch");
  TrainReport report;
  report.predictor.layers = m.cfg.layers;
  report.predictor.experts = m.cfg.experts;
  report.predictor.d_hidden = m.cfg.d_hidden;
  for (const auto &data : trace) {
    SingleLayerFit fit = train_logistic_ova(data, opt);
    report.predictor.w.push_back(std::move(fit.w));
    report.predictor.b.push_back(std::move(fit.b));
    report.loss.push_back(std::move(fit.loss));
  }
  return report;
}

std::vector<std::uint32_t> predict_experts(const InterExpertPredictor &p,
                                           const Vec &x, std::uint32_t layer,
                                           std::uint32_t prefetch_count) {
  if (layer == 0)
    throw std::runtime_error(
        "predict_experts: layer 0 has no lookahead predictor");
  if (layer >= p.layers) throw std::runtime_error("predict_experts: bad layer");
  if (x.size() != p.d_hidden)
    throw std::runtime_error("predict_experts: dimension mismatch");
  Vec scores;
  gemv(p.w[layer - 1], x, scores);
  for (std::uint32_t e = 0; e < p.experts; ++e) scores[e] += p.b[layer - 1][e];
  return top_k(scores, prefetch_count);
}

std::vector<std::uint8_t> predict_mask(const QuantizedTensor &up_next,
                                       std::uint32_t d_hidden, const Vec &x_prev,
                                       float t) {
  if (x_prev.size() != d_hidden)
    throw std::runtime_error("predict_mask: dimension mismatch");
  if (up_next.n % d_hidden != 0)
    throw std::runtime_error("predict_mask: tensor not channel-divisible");
  Vec v(up_next.n / d_hidden);
  qgemv_channels(up_next, d_hidden, x_prev.data(), v.data());
  return sparsity_mask(v, t);
}

namespace {
template <typename Set>
void accumulate_pr(const Set &pred, const Set &truth, std::size_t inter,
                   std::size_t pred_n, std::size_t truth_n, double &psum,
                   double &rsum) {
  (void)pred;
  (void)truth;
  psum += pred_n == 0 ? (truth_n == 0 ? 1.0 : 0.0)
                      : static_cast<double>(inter) / static_cast<double>(pred_n);
  rsum += truth_n == 0
              ? 1.0
              : static_cast<double>(inter) / static_cast<double>(truth_n);
}
}  // namespace

PredictionMetrics eval_sets(const std::vector<std::vector<std::uint32_t>> &pred,
                            const std::vector<std::vector<std::uint32_t>> &truth) {
  if (pred.size() != truth.size())
    throw std::runtime_error("eval_sets: count mismatch");
  double psum = 0.0, rsum = 0.0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    // Index lists are ascending, so the intersection is a linear merge.
    std::size_t inter = 0, i = 0, j = 0;
    while (i < pred[s].size() && j < truth[s].size()) {
      if (pred[s][i] == truth[s][j]) inter++, i++, j++;
      else if (pred[s][i] < truth[s][j]) i++;
      else j++;
    }
    accumulate_pr(pred[s], truth[s], inter, pred[s].size(), truth[s].size(),
                  psum, rsum);
  }
  PredictionMetrics out;
  out.samples = pred.size();
  if (out.samples) {
    out.precision = psum / static_cast<double>(out.samples);
    out.recall = rsum / static_cast<double>(out.samples);
  }
  return out;
}

PredictionMetrics eval_masks(const std::vector<std::vector<std::uint8_t>> &pred,
                             const std::vector<std::vector<std::uint8_t>> &truth) {
  if (pred.size() != truth.size())
    throw std::runtime_error("eval_masks: count mismatch");
  double psum = 0.0, rsum = 0.0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    if (pred[s].size() != truth[s].size())
      throw std::runtime_error("eval_masks: mask length mismatch");
    std::size_t inter = 0, pn = 0, tn = 0;
    for (std::size_t i = 0; i < pred[s].size(); ++i) {
      pn += pred[s][i] != 0;
      tn += truth[s][i] != 0;
      inter += (pred[s][i] && truth[s][i]) ? 1 : 0;
    }
    accumulate_pr(pred[s], truth[s], inter, pn, tn, psum, rsum);
  }
  PredictionMetrics out;
  out.samples = pred.size();
  if (out.samples) {
    out.precision = psum / static_cast<double>(out.samples);
    out.recall = rsum / static_cast<double>(out.samples);
  }
  return out;
}

RoutingDataset synthetic_routing_dataset(std::uint64_t seed,
                                         std::uint32_t d_hidden,
                                         std::uint32_t experts,
                                         std::uint32_t top_k_n,
                                         std::size_t count, float margin) {
  RoutingDataset data;
  data.experts = experts;
  data.d_hidden = d_hidden;
  data.top_k = top_k_n;
  Matrix router(experts, d_hidden);
  {
    Rng rng(seed, 0);
    float s = 1.0f / std::sqrt(static_cast<float>(d_hidden));
    for (auto &v : router.data) v = s * rng.normal_f();
  }
  Rng rng(seed, 1);
  while (data.x.size() < count) {
    Vec x(d_hidden);
    for (auto &v : x) v = rng.normal_f();
    Vec logits;
    gemv(router, x, logits);
    // Keep tokens whose k-th/(k+1)-th logit gap clears the margin, so the
    // top-k labels are robustly linearly separable.
    Vec sorted = logits;
    std::nth_element(sorted.begin(), sorted.begin() + (top_k_n - 1),
                     sorted.end(), std::greater<float>());
    float kth = sorted[top_k_n - 1];
    std::nth_element(sorted.begin(), sorted.begin() + top_k_n, sorted.end(),
                     std::greater<float>());
    float next = sorted[top_k_n];
    if (kth - next < margin) continue;
    data.labels.push_back(top_k(logits, top_k_n));
    data.x.push_back(std::move(x));
  }
  return data;
}

RoutingDataset chance_routing_dataset(std::uint64_t seed, std::uint32_t d_hidden,
                                      std::uint32_t experts,
                                      std::uint32_t top_k_n, std::size_t count) {
  RoutingDataset data;
  data.experts = experts;
  data.d_hidden = d_hidden;
  data.top_k = top_k_n;
  Rng rng(seed, 2);
  for (std::size_t s = 0; s < count; ++s) {
    Vec x(d_hidden);
    for (auto &v : x) v = rng.normal_f();
    // Labels drawn independently of x: random score vector, top-k of it.
    Vec fake(experts);
    for (auto &v : fake) v = rng.normal_f();
    data.x.push_back(std::move(x));
    data.labels.push_back(top_k(fake, top_k_n));
  }
  return data;
}

namespace {
// Shared per-eps evaluation: thresholds calibrated at the same drift scale,
// then reuse masks from the previous block input scored against true masks.
std::vector<PredictionMetrics> reuse_metrics_at(
    const MoEModel &m, float eps, double k, std::uint64_t seed,
    std::uint64_t calib_tokens, std::uint64_t eval_tokens) {
  ThresholdTable table =
      calibrate_model(m, seed, calib_tokens, k, kReservoirCap, 1, eps);
  CompressedModel cm = compress_model(m, table, 8, 64);

  const std::uint32_t L = m.cfg.layers;
  std::vector<std::vector<std::vector<std::uint8_t>>> pred(L), truth(L);
  for (std::uint64_t t = 0; t < eval_tokens; ++t) {
    // Offset the stream so evaluation tokens differ from calibration ones.
    Vec h = token_input(seed + 1, t, m.cfg.d_hidden);
    Vec prev_u;
    for (std::uint32_t l = 0; l < L; ++l) {
      Vec mixed;
      gemv(m.layers[l].mixing, h, mixed);
      Vec u(h.size());
      for (std::size_t i = 0; i < h.size(); ++i) u[i] = h[i] + eps * mixed[i];
      RouteResult r = route(m.layers[l].router, u, m.cfg.top_k);
      if (l > 0) {
        for (auto e : r.experts) {
          const CompressedExpert &ce = cm.layers[l].experts[e];
          truth[l].push_back(
              predict_mask(ce.up_q, ce.d_hidden, u, ce.threshold));
          pred[l].push_back(
              predict_mask(ce.up_q, ce.d_hidden, prev_u, ce.threshold));
        }
      }
      prev_u = u;
      h = layer_forward(m, l, h, eps);
    }
  }
  // Entry i covers the transition into layer i+1, like build_routing_trace.
  std::vector<PredictionMetrics> out(L - 1);
  for (std::uint32_t l = 1; l < L; ++l)
    out[l - 1] = eval_masks(pred[l], truth[l]);
  return out;
}
}  // namespace

std::vector<DriftPoint> reuse_drift_recalls(const MoEModel &m,
                                            const std::vector<float> &eps_list,
                                            double sparsity_k,
                                            std::uint64_t seed,
                                            std::uint64_t calib_tokens,
                                            std::uint64_t eval_tokens) {
  std::vector<DriftPoint> out;
  for (float eps : eps_list) {
    auto per_layer =
        reuse_metrics_at(m, eps, sparsity_k, seed, calib_tokens, eval_tokens);
    double rsum = 0.0;
    std::uint64_t n = 0;
    for (const PredictionMetrics &pm : per_layer) {
      rsum += pm.recall * static_cast<double>(pm.samples);
      n += pm.samples;
    }
    DriftPoint pt;
    pt.eps = eps;
    pt.recall = n ? rsum / static_cast<double>(n) : 0.0;
    out.push_back(pt);
  }
  return out;
}

std::vector<PredictionMetrics> reuse_mask_metrics(const MoEModel &m,
                                                  float drift_scale,
                                                  double sparsity_k,
                                                  std::uint64_t seed,
                                                  std::uint64_t calib_tokens,
                                                  std::uint64_t eval_tokens) {
  return reuse_metrics_at(m, drift_scale, sparsity_k, seed, calib_tokens,
                          eval_tokens);
}

std::uint64_t learned_predictor_footprint(std::uint64_t d_hidden,
                                          std::uint64_t d_intermediate,
                                          std::uint64_t rank,
                                          std::uint64_t blocks) {
  return (d_hidden * rank + rank * d_intermediate) * 2 * blocks;
}

std::uint64_t sign_bit_footprint(std::uint64_t d_intermediate,
                                 std::uint64_t states, std::uint64_t blocks) {
  return d_intermediate * states * 4 * blocks;
}

}  // namespace floe
