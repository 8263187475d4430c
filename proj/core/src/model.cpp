#include "floe/model.hpp"

#include <cmath>
#include <stdexcept>

#include "floe/io.hpp"
#include "floe/rng.hpp"

namespace floe {

void MoEConfig::validate() const {
  if (layers == 0 || experts == 0 || d_hidden == 0 || d_intermediate == 0)
    throw std::runtime_error("model config: all dimensions must be >= 1");
  if (top_k == 0 || top_k > experts)
    throw std::runtime_error("model config: need 1 <= top_k <= experts");
}

// Random-stream layout. Weight tensors get one base stream per
// (layer, tensor-kind, expert), subdivided into kLogicalShards contiguous
// ranges; tokens and other consumers live in disjoint high ranges.
namespace {
enum TensorKind : std::uint64_t { kRouter = 0, kMixing, kGate, kUp, kDown };
constexpr std::uint64_t kTokenStreamBase = 1ULL << 40;

std::uint64_t weight_stream(std::uint64_t layer, std::uint64_t kind,
                            std::uint64_t expert) {
  return ((layer * 5 + kind) * 65536 + expert) * kLogicalShards;
}

// Fills out with sigma-scaled normals, shard-parallel but order-fixed.
void fill_gaussian(float *out, std::size_t n, std::uint64_t seed,
                   std::uint64_t base_stream, float sigma, unsigned workers) {
  parallel_shards(kLogicalShards, workers, [&](std::uint64_t s) {
    std::size_t lo = n * s / kLogicalShards;
    std::size_t hi = n * (s + 1) / kLogicalShards;
    Rng rng(seed, base_stream + s);
    for (std::size_t i = lo; i < hi; ++i) out[i] = sigma * rng.normal_f();
  });
}
}  // namespace

MoEModel gen_model(const MoEConfig &cfg, unsigned workers) {
  cfg.validate();
  MoEModel m;
  m.cfg = cfg;
  m.layers.resize(cfg.layers);
  const std::size_t dh = cfg.d_hidden, di = cfg.d_intermediate;
  const float sigma = 1.0f / std::sqrt(static_cast<float>(dh));
  for (std::uint32_t l = 0; l < cfg.layers; ++l) {
    MoELayer &layer = m.layers[l];
    layer.router = Matrix(cfg.experts, dh);
    fill_gaussian(layer.router.data.data(), layer.router.size(), cfg.seed,
                  weight_stream(l, kRouter, 0), sigma, workers);
    layer.mixing = Matrix(dh, dh);
    fill_gaussian(layer.mixing.data.data(), layer.mixing.size(), cfg.seed,
                  weight_stream(l, kMixing, 0), sigma, workers);
    layer.experts.resize(cfg.experts);
    for (std::uint32_t e = 0; e < cfg.experts; ++e) {
      ExpertWeights &w = layer.experts[e];
      w.d_hidden = cfg.d_hidden;
      w.d_intermediate = cfg.d_intermediate;
      w.gate.resize(dh * di);
      w.up.resize(dh * di);
      w.down_t.resize(dh * di);
      fill_gaussian(w.gate.data(), w.gate.size(), cfg.seed,
                    weight_stream(l, kGate, e), sigma, workers);
      fill_gaussian(w.up.data(), w.up.size(), cfg.seed,
                    weight_stream(l, kUp, e), sigma, workers);
      fill_gaussian(w.down_t.data(), w.down_t.size(), cfg.seed,
                    weight_stream(l, kDown, e), sigma, workers);
    }
  }
  return m;
}

Vec token_input(std::uint64_t seed, std::uint64_t t, std::uint32_t d_hidden) {
  Rng rng(seed, kTokenStreamBase + t);
  Vec x(d_hidden);
  for (auto &v : x) v = rng.normal_f();
  return x;
}

RouteResult route(const Matrix &router, const Vec &h, std::uint32_t top_k_n) {
  Vec logits;
  gemv(router, h, logits);
  RouteResult r;
  r.experts = top_k(logits, top_k_n);
  r.weights.resize(r.experts.size());
  for (std::size_t i = 0; i < r.experts.size(); ++i)
    r.weights[i] = logits[r.experts[i]];
  softmax_inplace(r.weights);
  return r;
}

Vec expert_forward(const ExpertWeights &e, const Vec &h) {
  if (h.size() != e.d_hidden)
    throw std::runtime_error("expert_forward: dimension mismatch");
  Vec y(e.d_hidden, 0.0f);
  for (std::size_t i = 0; i < e.d_intermediate; ++i) {
    float g = silu(dot_f32(e.gate_ch(i), h.data(), e.d_hidden));
    float v = dot_f32(e.up_ch(i), h.data(), e.d_hidden);
    float a = g * v;
    const float *d = e.down_ch(i);
    for (std::size_t j = 0; j < e.d_hidden; ++j) y[j] += a * d[j];
  }
  return y;
}

Vec expert_forward_sparse(const ExpertWeights &e, const Vec &h, float t) {
  if (h.size() != e.d_hidden)
    throw std::runtime_error("expert_forward_sparse: dimension mismatch");
  if (t < 0.0f)
    throw std::runtime_error("expert_forward_sparse: negative threshold");
  Vec v(e.d_intermediate);
  for (std::size_t i = 0; i < e.d_intermediate; ++i)
    v[i] = dot_f32(e.up_ch(i), h.data(), e.d_hidden);
  Vec y(e.d_hidden, 0.0f);
  for (std::size_t i = 0; i < e.d_intermediate; ++i) {
    if (std::fabs(v[i]) < t) continue;  // below-threshold channel: untouched
    float g = silu(dot_f32(e.gate_ch(i), h.data(), e.d_hidden));
    float a = g * v[i];
    const float *d = e.down_ch(i);
    for (std::size_t j = 0; j < e.d_hidden; ++j) y[j] += a * d[j];
  }
  return y;
}

Vec expert_forward_sparse(const CompressedExpert &e, const Vec &h) {
  if (h.size() != e.d_hidden)
    throw std::runtime_error("expert_forward_sparse: dimension mismatch");
  Vec v(e.d_intermediate);
  qgemv_channels(e.up_q, e.d_hidden, h.data(), v.data());
  Vec y(e.d_hidden, 0.0f);
  for (std::size_t i = 0; i < e.d_intermediate; ++i) {
    if (std::fabs(v[i]) < e.threshold) continue;
    float g = silu(dot_f32(e.gate_ch(i), h.data(), e.d_hidden));
    float a = g * v[i];
    const float *d = e.down_ch(i);
    for (std::size_t j = 0; j < e.d_hidden; ++j) y[j] += a * d[j];
  }
  return y;
}

// Shared combining rule for dense and compressed blocks.
template <typename Layer, typename ExpertFn>
static Vec block_forward(const Layer &layer, std::uint32_t top_k_n,
                         const Vec &h, float drift_scale, ExpertFn &&expert_fn,
                         LayerTrace *trace) {
  Vec mixed;
  gemv(layer.mixing, h, mixed);
  Vec u(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) u[i] = h[i] + drift_scale * mixed[i];

  RouteResult r = route(layer.router, u, top_k_n);
  Vec y = u;
  if (trace) {
    trace->block_input = u;
    trace->experts = r.experts;
    trace->weights = r.weights;
    trace->masks.clear();
  }
  for (std::size_t j = 0; j < r.experts.size(); ++j) {
    Vec out = expert_fn(r.experts[j], u, trace);
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] += drift_scale * r.weights[j] * out[i];
  }
  if (trace) trace->out = y;
  return y;
}

Vec layer_forward(const MoEModel &m, std::uint32_t layer, const Vec &h,
                  float drift_scale) {
  if (layer >= m.cfg.layers) throw std::runtime_error("layer_forward: bad layer");
  return block_forward(
      m.layers[layer], m.cfg.top_k, h, drift_scale,
      [&](std::uint32_t e, const Vec &u, LayerTrace *) {
        return expert_forward(m.layers[layer].experts[e], u);
      },
      nullptr);
}

Vec layer_forward(const CompressedModel &m, std::uint32_t layer, const Vec &h) {
  if (layer >= m.cfg.layers) throw std::runtime_error("layer_forward: bad layer");
  return block_forward(
      m.layers[layer], m.cfg.top_k, h, 1.0f,
      [&](std::uint32_t e, const Vec &u, LayerTrace *) {
        return expert_forward_sparse(m.layers[layer].experts[e], u);
      },
      nullptr);
}

LayerTrace layer_forward_traced(const CompressedModel &m, std::uint32_t layer,
                                const Vec &h) {
  if (layer >= m.cfg.layers) throw std::runtime_error("layer_forward: bad layer");
  LayerTrace trace;
  block_forward(
      m.layers[layer], m.cfg.top_k, h, 1.0f,
      [&](std::uint32_t e, const Vec &u, LayerTrace *tr) {
        const CompressedExpert &ce = m.layers[layer].experts[e];
        // Recompute v here to record the mask the kernel acts on.
        Vec v(ce.d_intermediate);
        qgemv_channels(ce.up_q, ce.d_hidden, u.data(), v.data());
        tr->masks.push_back(sparsity_mask(v, ce.threshold));
        return expert_forward_sparse(ce, u);
      },
      &trace);
  return trace;
}

CompressedExpert compress_expert(const ExpertWeights &e, unsigned bits,
                                 std::uint32_t group_size, float threshold) {
  CompressedExpert c;
  c.d_hidden = e.d_hidden;
  c.d_intermediate = e.d_intermediate;
  c.up_q = quantize(e.up, bits, group_size);
  c.gate = e.gate;
  c.down_t = e.down_t;
  c.threshold = threshold;
  return c;
}

CompressedModel compress_model(const MoEModel &m, const ThresholdTable &t,
                               unsigned bits, std::uint32_t group_size) {
  if (t.layers != m.cfg.layers || t.experts != m.cfg.experts)
    throw std::runtime_error("compress_model: threshold table shape mismatch");
  CompressedModel c;
  c.cfg = m.cfg;
  c.bits = bits;
  c.group_size = group_size;
  c.layers.resize(m.cfg.layers);
  for (std::uint32_t l = 0; l < m.cfg.layers; ++l) {
    c.layers[l].router = m.layers[l].router;
    c.layers[l].mixing = m.layers[l].mixing;
    c.layers[l].experts.reserve(m.cfg.experts);
    for (std::uint32_t e = 0; e < m.cfg.experts; ++e)
      c.layers[l].experts.push_back(
          compress_expert(m.layers[l].experts[e], bits, group_size, t.at(l, e)));
  }
  return c;
}

StatsReport collect_stats(const MoEModel &m, std::uint64_t seed,
                          std::uint64_t tokens, std::size_t sample_cap,
                          unsigned workers, float drift_scale) {
  if (tokens == 0) throw std::runtime_error("collect_stats: empty token stream");
  const std::uint32_t L = m.cfg.layers, E = m.cfg.experts;

  // Per-shard collection, merged in shard order so the outcome is identical
  // for any worker count.
  struct ShardOut {
    std::vector<std::vector<float>> mags;  // [layer*experts+expert]
    std::vector<double> cos_sum;           // [layer-1 transitions]
    std::uint64_t tokens = 0;
  };
  std::uint64_t shards = std::min<std::uint64_t>(kLogicalShards, tokens);
  std::vector<ShardOut> outs(shards);
  parallel_shards(shards, workers, [&](std::uint64_t s) {
    ShardOut &o = outs[s];
    o.mags.resize(static_cast<std::size_t>(L) * E);
    o.cos_sum.assign(L > 1 ? L - 1 : 0, 0.0);
    std::uint64_t lo = tokens * s / shards, hi = tokens * (s + 1) / shards;
    Vec v(m.cfg.d_intermediate);
    for (std::uint64_t t = lo; t < hi; ++t) {
      Vec h = token_input(seed, t, m.cfg.d_hidden);
      Vec prev_u;
      for (std::uint32_t l = 0; l < L; ++l) {
        // Mirror layer_forward but keep u and per-expert |a_up|.
        Vec mixed;
        gemv(m.layers[l].mixing, h, mixed);
        Vec u(h.size());
        for (std::size_t i = 0; i < h.size(); ++i)
          u[i] = h[i] + drift_scale * mixed[i];
        if (l > 0) o.cos_sum[l - 1] += cosine_similarity(prev_u, u);
        RouteResult r = route(m.layers[l].router, u, m.cfg.top_k);
        Vec y = u;
        for (std::size_t j = 0; j < r.experts.size(); ++j) {
          const ExpertWeights &e = m.layers[l].experts[r.experts[j]];
          auto &mag = o.mags[static_cast<std::size_t>(l) * E + r.experts[j]];
          Vec out(e.d_hidden, 0.0f);
          for (std::size_t i = 0; i < e.d_intermediate; ++i) {
            float g = silu(dot_f32(e.gate_ch(i), u.data(), e.d_hidden));
            float vi = dot_f32(e.up_ch(i), u.data(), e.d_hidden);
            mag.push_back(std::fabs(vi));
            float a = g * vi;
            const float *d = e.down_ch(i);
            for (std::size_t k = 0; k < e.d_hidden; ++k) out[k] += a * d[k];
          }
          for (std::size_t i = 0; i < y.size(); ++i)
            y[i] += drift_scale * r.weights[j] * out[i];
        }
        prev_u = std::move(u);
        h = std::move(y);
      }
      o.tokens++;
    }
  });

  StatsReport report;
  report.samples = ActivationSampleSet(L, E);
  std::vector<SampleReservoir> reservoirs;
  reservoirs.reserve(static_cast<std::size_t>(L) * E);
  for (std::uint32_t l = 0; l < L; ++l)
    for (std::uint32_t e = 0; e < E; ++e)
      reservoirs.emplace_back(sample_cap, seed ^ 0x5eedca11u,
                              static_cast<std::uint64_t>(l) * E + e);
  std::vector<double> cos_sum(L > 1 ? L - 1 : 0, 0.0);
  for (auto &o : outs) {
    for (std::size_t i = 0; i < o.mags.size(); ++i)
      for (float v : o.mags[i]) reservoirs[i].add(v);
    for (std::size_t i = 0; i < cos_sum.size(); ++i) cos_sum[i] += o.cos_sum[i];
  }
  for (std::uint32_t l = 0; l < L; ++l)
    for (std::uint32_t e = 0; e < E; ++e)
      report.samples.at(l, e) =
          reservoirs[static_cast<std::size_t>(l) * E + e].samples();
  report.similarity.tokens = tokens;
  report.similarity.mean_cosine.resize(cos_sum.size());
  for (std::size_t i = 0; i < cos_sum.size(); ++i)
    report.similarity.mean_cosine[i] = cos_sum[i] / static_cast<double>(tokens);
  return report;
}

ThresholdTable calibrate_model(const MoEModel &m, std::uint64_t seed,
                               std::uint64_t tokens, double k,
                               std::size_t sample_cap, unsigned workers,
                               float drift_scale) {
  StatsReport stats =
      collect_stats(m, seed, tokens, sample_cap, workers, drift_scale);
  return calibrate(stats.samples, k);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {
constexpr std::uint32_t kFormatVersion = 1;

void write_header(ByteWriter &w, const char magic[4], const MoEConfig &cfg) {
  w.bytes(magic, 4);
  w.u32(kFormatVersion);
  w.u32(cfg.layers);
  w.u32(cfg.experts);
  w.u32(cfg.top_k);
  w.u32(cfg.d_hidden);
  w.u32(cfg.d_intermediate);
  w.u64(cfg.seed);
}

MoEConfig read_header(ByteReader &r, const char magic[4]) {
  char m[4];
  r.bytes(m, 4);
  if (std::string(m, 4) != std::string(magic, 4))
    throw std::runtime_error("model file: bad magic");
  std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw std::runtime_error("model file: unsupported version " +
                             std::to_string(version));
  MoEConfig cfg;
  cfg.layers = r.u32();
  cfg.experts = r.u32();
  cfg.top_k = r.u32();
  cfg.d_hidden = r.u32();
  cfg.d_intermediate = r.u32();
  cfg.seed = r.u64();
  cfg.validate();
  return cfg;
}
}  // namespace

void save_model(const MoEModel &m, const std::string &path) {
  ByteWriter w;
  write_header(w, "FLOE", m.cfg);
  for (const auto &layer : m.layers) {
    w.f32_array(layer.router.data.data(), layer.router.size());
    w.f32_array(layer.mixing.data.data(), layer.mixing.size());
    for (const auto &e : layer.experts) {
      w.f32_array(e.gate.data(), e.gate.size());
      w.f32_array(e.up.data(), e.up.size());
      w.f32_array(e.down_t.data(), e.down_t.size());
    }
  }
  write_file_atomic(path, w.data());
}

MoEModel load_model(const std::string &path) {
  auto buf = read_file(path);
  ByteReader r(buf);
  MoEModel m;
  m.cfg = read_header(r, "FLOE");
  const std::size_t dh = m.cfg.d_hidden, di = m.cfg.d_intermediate;
  m.layers.resize(m.cfg.layers);
  for (auto &layer : m.layers) {
    layer.router = Matrix(m.cfg.experts, dh);
    r.f32_array(layer.router.data.data(), layer.router.size());
    layer.mixing = Matrix(dh, dh);
    r.f32_array(layer.mixing.data.data(), layer.mixing.size());
    layer.experts.resize(m.cfg.experts);
    for (auto &e : layer.experts) {
      e.d_hidden = m.cfg.d_hidden;
      e.d_intermediate = m.cfg.d_intermediate;
      e.gate.resize(dh * di);
      e.up.resize(dh * di);
      e.down_t.resize(dh * di);
      r.f32_array(e.gate.data(), e.gate.size());
      r.f32_array(e.up.data(), e.up.size());
      r.f32_array(e.down_t.data(), e.down_t.size());
    }
  }
  if (r.remaining() != 0)
    throw std::runtime_error("model file: trailing bytes in " + path);
  return m;
}

void save_compressed(const CompressedModel &m, const std::string &path) {
  ByteWriter w;
  write_header(w, "FLOQ", m.cfg);
  w.u8(static_cast<std::uint8_t>(m.bits));
  w.u32(m.group_size);
  for (const auto &layer : m.layers) {
    w.f32_array(layer.router.data.data(), layer.router.size());
    w.f32_array(layer.mixing.data.data(), layer.mixing.size());
    for (const auto &e : layer.experts) {
      w.bytes(e.up_q.codes.data(), e.up_q.codes.size());
      for (auto s : e.up_q.scales) w.u16(s);
      for (auto z : e.up_q.zeros) w.u16(z);
      w.f32_array(e.gate.data(), e.gate.size());
      w.f32_array(e.down_t.data(), e.down_t.size());
      w.f32(e.threshold);
    }
  }
  write_file_atomic(path, w.data());
}

CompressedModel load_compressed(const std::string &path) {
  auto buf = read_file(path);
  ByteReader r(buf);
  CompressedModel m;
  m.cfg = read_header(r, "FLOQ");
  m.bits = r.u8();
  m.group_size = r.u32();
  const std::size_t dh = m.cfg.d_hidden, di = m.cfg.d_intermediate;
  const std::size_t n = dh * di;
  if (m.group_size == 0 || n % m.group_size != 0)
    throw std::runtime_error("compressed file: bad group size");
  m.layers.resize(m.cfg.layers);
  for (auto &layer : m.layers) {
    layer.router = Matrix(m.cfg.experts, dh);
    r.f32_array(layer.router.data.data(), layer.router.size());
    layer.mixing = Matrix(dh, dh);
    r.f32_array(layer.mixing.data.data(), layer.mixing.size());
    layer.experts.resize(m.cfg.experts);
    for (auto &e : layer.experts) {
      e.d_hidden = m.cfg.d_hidden;
      e.d_intermediate = m.cfg.d_intermediate;
      e.up_q.n = n;
      e.up_q.bits = m.bits;
      e.up_q.group_size = m.group_size;
      e.up_q.codes.resize(packed_code_bytes(n, m.bits));
      r.bytes(e.up_q.codes.data(), e.up_q.codes.size());
      e.up_q.scales.resize(n / m.group_size);
      for (auto &s : e.up_q.scales) s = r.u16();
      e.up_q.zeros.resize(n / m.group_size);
      for (auto &z : e.up_q.zeros) z = r.u16();
      e.gate.resize(n);
      e.down_t.resize(n);
      r.f32_array(e.gate.data(), e.gate.size());
      r.f32_array(e.down_t.data(), e.down_t.size());
      e.threshold = r.f32();
    }
  }
  if (r.remaining() != 0)
    throw std::runtime_error("compressed file: trailing bytes in " + path);
  return m;
}

std::uint64_t model_file_size(const MoEConfig &cfg) {
  std::uint64_t per_layer =
      (static_cast<std::uint64_t>(cfg.experts) * cfg.d_hidden +        // router
       static_cast<std::uint64_t>(cfg.d_hidden) * cfg.d_hidden +      // mixing
       3ull * cfg.experts * cfg.d_hidden * cfg.d_intermediate) *      // experts
      4;
  return 36 + cfg.layers * per_layer;
}

std::uint64_t compressed_file_size(const MoEConfig &cfg, unsigned bits,
                                   std::uint32_t group_size) {
  std::uint64_t n = static_cast<std::uint64_t>(cfg.d_hidden) * cfg.d_intermediate;
  std::uint64_t per_expert = packed_code_bytes(n, bits) +
                             4 * (n / group_size) +  // f16 scales + zeros
                             2 * n * 4 +             // gate + down_t
                             4;                      // threshold
  std::uint64_t per_layer =
      (static_cast<std::uint64_t>(cfg.experts) * cfg.d_hidden +
       static_cast<std::uint64_t>(cfg.d_hidden) * cfg.d_hidden) *
          4 +
      cfg.experts * per_expert;
  return 36 + 1 + 4 + cfg.layers * per_layer;
}

}  // namespace floe
