#include "floe/offload.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "floe/io.hpp"

namespace floe {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) {
  return (a + b - 1) / b;
}

}  // namespace

std::uint64_t CompactSelection::requests(std::uint32_t chunk_size) const {
  if (chunk_size == 0) throw std::runtime_error("requests: chunk_size must be positive");
  if (channels.empty()) return 0;
  return ceil_div(channels.size(), chunk_size);
}

CompactSelection pack_compact(const CompressedExpert &e,
                              const std::vector<std::uint8_t> &mask,
                              std::uint32_t element_bytes) {
  if (mask.size() != e.d_intermediate)
    throw std::runtime_error("pack_compact: mask size mismatch");
  if (element_bytes != 2 && element_bytes != 4)
    throw std::runtime_error("pack_compact: element_bytes must be 2 or 4");
  CompactSelection sel;
  sel.d_hidden = e.d_hidden;
  sel.element_bytes = element_bytes;
  ByteWriter w;
  for (std::uint32_t i = 0; i < e.d_intermediate; ++i) {
    if (!mask[i]) continue;
    sel.channels.push_back(i);
    const float *g = e.gate_ch(i);
    const float *d = e.down_ch(i);
    if (element_bytes == 4) {
      w.f32_array(g, e.d_hidden);
      w.f32_array(d, e.d_hidden);
    } else {
      for (std::uint32_t j = 0; j < e.d_hidden; ++j) w.f16(g[j]);
      for (std::uint32_t j = 0; j < e.d_hidden; ++j) w.f16(d[j]);
    }
  }
  sel.payload = w.data();
  return sel;
}

void unpack_compact(const CompactSelection &sel, Vec &gate_cols, Vec &down_rows) {
  const std::size_t n = sel.channels.size();
  gate_cols.assign(n * sel.d_hidden, 0.0f);
  down_rows.assign(n * sel.d_hidden, 0.0f);
  ByteReader r(sel.payload);
  for (std::size_t i = 0; i < n; ++i) {
    float *g = gate_cols.data() + i * sel.d_hidden;
    float *d = down_rows.data() + i * sel.d_hidden;
    if (sel.element_bytes == 4) {
      r.f32_array(g, sel.d_hidden);
      r.f32_array(d, sel.d_hidden);
    } else {
      for (std::uint32_t j = 0; j < sel.d_hidden; ++j) g[j] = r.f16();
      for (std::uint32_t j = 0; j < sel.d_hidden; ++j) d[j] = r.f16();
    }
  }
  if (r.remaining() != 0)
    throw std::runtime_error("unpack_compact: payload size mismatch");
}

void TransferModel::validate() const {
  if (!(bandwidth > 0) || !(request_overhead >= 0) || !(pack_rate > 0) ||
      streams == 0)
    throw std::runtime_error("transfer model: parameters must be positive");
}

double transfer_time(std::uint64_t bytes, std::uint64_t requests,
                     const TransferModel &tm) {
  tm.validate();
  return static_cast<double>(requests) * tm.request_overhead / tm.streams +
         static_cast<double>(bytes) / tm.pack_rate +
         static_cast<double>(bytes) / tm.bandwidth;
}

ExpertCache::ExpertCache(std::uint64_t capacity) : capacity_(capacity) {}

bool ExpertCache::up_resident(std::uint64_t key) const {
  auto it = entries_.find(key);
  return it != entries_.end() && it->second.up;
}

bool ExpertCache::channel_resident(std::uint64_t key, std::uint32_t ch) const {
  auto it = entries_.find(key);
  return it != entries_.end() && ch < it->second.ch.size() && it->second.ch[ch];
}

ExpertCache::Entry &ExpertCache::touch_entry(std::uint64_t key,
                                             std::uint32_t d_intermediate) {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    order_.push_back(key);
    Entry e;
    e.ch.assign(d_intermediate, 0);
    e.pos = std::prev(order_.end());
    it = entries_.emplace(key, std::move(e)).first;
  } else {
    order_.splice(order_.end(), order_, it->second.pos);
  }
  return it->second;
}

std::uint64_t ExpertCache::add_up(std::uint64_t key, std::uint64_t up_bytes,
                                  std::uint32_t d_intermediate) {
  Entry &e = touch_entry(key, d_intermediate);
  if (e.up) return 0;
  e.up = true;
  e.bytes += up_bytes;
  used_ += up_bytes;
  evict_over_budget(key);
  return up_bytes;
}

std::uint64_t ExpertCache::add_channel(std::uint64_t key, std::uint32_t ch,
                                       std::uint64_t ch_bytes,
                                       std::uint32_t d_intermediate) {
  Entry &e = touch_entry(key, d_intermediate);
  if (ch >= e.ch.size()) throw std::runtime_error("cache: channel out of range");
  if (e.ch[ch]) return 0;
  e.ch[ch] = 1;
  e.bytes += ch_bytes;
  used_ += ch_bytes;
  evict_over_budget(key);
  return ch_bytes;
}

void ExpertCache::touch(std::uint64_t key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return;
  order_.splice(order_.end(), order_, it->second.pos);
}

void ExpertCache::evict_over_budget(std::uint64_t keep_key) {
  while (used_ > capacity_ && !order_.empty()) {
    std::uint64_t victim = order_.front();
    if (victim == keep_key) break;  // never evict the entry just inserted
    auto it = entries_.find(victim);
    used_ -= it->second.bytes;
    entries_.erase(it);
    order_.pop_front();
  }
}

std::vector<std::uint64_t> ExpertCache::lru_order() const {
  return {order_.begin(), order_.end()};
}

std::uint64_t up_transfer_bytes(const CompressedExpert &e) {
  return e.up_q.stored_bytes();
}

std::uint64_t channel_record_bytes(std::uint32_t d_hidden,
                                   std::uint32_t element_bytes) {
  return 2ull * d_hidden * element_bytes;
}

std::uint64_t full_expert_bytes(const CompressedExpert &e,
                                std::uint32_t element_bytes) {
  return up_transfer_bytes(e) +
         e.d_intermediate * channel_record_bytes(e.d_hidden, element_bytes);
}

namespace {

// One in-flight prefetch batch: which items it carries and what it costs.
struct PrefetchBatch {
  std::unordered_set<std::uint64_t> ups;
  std::unordered_map<std::uint64_t, std::vector<std::uint8_t>> chans;
  std::uint64_t bytes = 0;
  std::uint64_t bytes_used = 0;
  double time = 0.0;

  bool has_channel(std::uint64_t key, std::uint32_t ch) const {
    auto it = chans.find(key);
    return it != chans.end() && it->second[ch];
  }
};

struct SimState {
  const CompressedModel &m;
  const InterExpertPredictor *pred;
  const SimOptions &opt;
  ExpertCache cache;
  std::uint64_t rec_bytes = 0;
  std::uint32_t n_pref = 0;  // experts per learned prefetch

  SimState(const CompressedModel &model, const InterExpertPredictor *p,
           const SimOptions &o)
      : m(model), pred(p), opt(o), cache(o.vram_budget) {}

  std::uint64_t key_of(std::uint32_t layer, std::uint32_t expert) const {
    return static_cast<std::uint64_t>(layer) * m.cfg.experts + expert;
  }
  const CompressedExpert &expert(std::uint32_t layer, std::uint32_t e) const {
    return m.layers[layer].experts[e];
  }
  std::uint64_t channel_requests(std::uint64_t n_ch) const {
    if (n_ch == 0) return 0;
    std::uint64_t per_stream = ceil_div(n_ch, opt.chunk_size);
    return opt.compact_layout ? per_stream : 2 * per_stream;
  }
};

// Prediction inputs available when the batch for `layer` is issued (one
// layer earlier): the previous block's input vector, or the raw token
// embedding when the target is a token's first layer.
std::vector<std::uint8_t> predicted_mask(const SimState &st, std::uint32_t layer,
                                         std::uint32_t e, const Vec &x_prev) {
  const CompressedExpert &ex = st.expert(layer, e);
  return predict_mask(ex.up_q, ex.d_hidden, x_prev, ex.threshold);
}

// Builds and issues the prefetch batch for one (token, layer) target.
// Inserts items into the cache immediately; arrival is modeled by the stall
// term when the batch outlasts the issuing layer's wall time.
PrefetchBatch issue_prefetch(SimState &st, const LayerTrace &target,
                             std::uint32_t layer, const Vec &x_prev,
                             DecodeTimeline &acct) {
  PrefetchBatch b;
  std::vector<std::uint32_t> experts;
  if (st.opt.expert_mode == ExpertPrediction::oracle) {
    experts = target.experts;
  } else if (st.opt.expert_mode == ExpertPrediction::learned) {
    if (layer == 0) return b;  // no lookahead input for a token's first layer
    experts = predict_experts(*st.pred, x_prev, layer, st.n_pref);
  } else {
    return b;
  }

  const std::uint32_t d_i = st.m.cfg.d_intermediate;
  std::uint64_t requests = 0;
  for (std::uint32_t e : experts) {
    std::uint64_t key = st.key_of(layer, e);
    const CompressedExpert &ex = st.expert(layer, e);

    std::vector<std::uint8_t> want;
    if (st.opt.channel_mode == ChannelPrediction::full) {
      want.assign(d_i, 1);
    } else if (st.opt.channel_mode == ChannelPrediction::oracle) {
      // The true mask exists only for truly routed experts; mispredicted
      // ones fall back to the reuse estimate.
      auto it = std::find(target.experts.begin(), target.experts.end(), e);
      if (it != target.experts.end()) {
        want = target.masks[it - target.experts.begin()];
      } else {
        want = predicted_mask(st, layer, e, x_prev);
      }
    } else {
      want = predicted_mask(st, layer, e, x_prev);
    }

    bool fetch_up = !st.cache.up_resident(key);
    std::vector<std::uint8_t> fetch_ch(d_i, 0);
    std::uint64_t n_ch = 0;
    for (std::uint32_t c = 0; c < d_i; ++c) {
      if (want[c] && !st.cache.channel_resident(key, c)) {
        fetch_ch[c] = 1;
        ++n_ch;
      }
    }
    if (fetch_up) {
      st.cache.add_up(key, up_transfer_bytes(ex), d_i);
      b.ups.insert(key);
      b.bytes += up_transfer_bytes(ex);
      ++requests;
      ++acct.requests_up;
    } else {
      st.cache.touch(key);
    }
    if (n_ch) {
      for (std::uint32_t c = 0; c < d_i; ++c)
        if (fetch_ch[c]) st.cache.add_channel(key, c, st.rec_bytes, d_i);
      b.chans.emplace(key, std::move(fetch_ch));
      b.bytes += n_ch * st.rec_bytes;
      std::uint64_t cr = st.channel_requests(n_ch);
      requests += cr;
      acct.requests_channel += cr;
    }
  }
  b.time = transfer_time(b.bytes, requests, st.opt.transfer);
  return b;
}

}  // namespace

DecodeTimeline simulate_decode(const CompressedModel &m,
                               const InterExpertPredictor *predictor,
                               const SimOptions &opt) {
  m.cfg.validate();
  opt.transfer.validate();
  if (opt.chunk_size == 0)
    throw std::runtime_error("simulate: chunk_size must be positive");
  if (opt.element_bytes != 2 && opt.element_bytes != 4)
    throw std::runtime_error("simulate: element_bytes must be 2 or 4");
  if (opt.expert_mode == ExpertPrediction::learned && predictor == nullptr)
    throw std::runtime_error("simulate: learned expert mode needs a predictor");

  DecodeTimeline out;
  out.tokens = opt.tokens;
  if (opt.tokens == 0) return out;

  const std::uint32_t L = m.cfg.layers;
  const std::uint32_t d_h = m.cfg.d_hidden;
  const std::uint32_t d_i = m.cfg.d_intermediate;
  const std::uint64_t full_bytes =
      full_expert_bytes(m.layers[0].experts[0], opt.element_bytes);
  if (opt.vram_budget < full_bytes)
    throw std::runtime_error(
        "simulate: cache capacity below one full compressed expert");

  SimState st(m, predictor, opt);
  st.rec_bytes = channel_record_bytes(d_h, opt.element_bytes);
  st.n_pref = opt.prefetch_count == 0 ? m.cfg.top_k
                                      : std::min(opt.prefetch_count, m.cfg.experts);

  // The trace of every step is computed up front: the simulator replays a
  // fixed decode, it does not interleave numerics with timing.
  std::vector<Vec> inputs(opt.tokens);
  std::vector<LayerTrace> traces(opt.tokens * L);
  for (std::uint64_t t = 0; t < opt.tokens; ++t) {
    inputs[t] = token_input(opt.seed, t, d_h);
    Vec h = inputs[t];
    for (std::uint32_t i = 0; i < L; ++i) {
      traces[t * L + i] = layer_forward_traced(m, i, h);
      h = traces[t * L + i].out;
    }
  }

  auto x_for = [&](std::uint64_t step) -> const Vec & {
    // Prediction input for the batch targeting `step`: the block input one
    // layer back, or the raw token embedding at a token's first layer.
    std::uint32_t layer = static_cast<std::uint32_t>(step % L);
    return layer == 0 ? inputs[step / L] : traces[step - 1].block_input;
  };

  const std::uint64_t steps = opt.tokens * L;
  // Token 0's first batch is a pre-clock prefill: its bytes are accounted
  // but its duration never stalls (stall at step 0 is pinned to zero).
  PrefetchBatch batch = issue_prefetch(
      st, traces[0], 0, x_for(0), out);

  double prev_wall = 0.0;
  for (std::uint64_t s = 0; s < steps; ++s) {
    const LayerTrace &tr = traces[s];
    const std::uint32_t layer = static_cast<std::uint32_t>(s % L);
    const std::uint64_t token = s / L;

    double stall = s == 0 ? 0.0 : std::max(0.0, batch.time - prev_wall);

    // Serve this layer's demands. Each demanded item lands in exactly one
    // bucket (cache, prefetch, sync), so the conservation identity is exact.
    std::uint64_t sync_bytes = 0, sync_requests = 0;
    double flop_sum = 0.0;
    for (std::size_t j = 0; j < tr.experts.size(); ++j) {
      std::uint32_t e = tr.experts[j];
      std::uint64_t key = st.key_of(layer, e);
      const CompressedExpert &ex = st.expert(layer, e);
      const std::vector<std::uint8_t> &mask = tr.masks[j];
      st.cache.touch(key);

      bool sync_up = false;
      if (!st.cache.up_resident(key)) {
        sync_up = true;
      } else if (batch.ups.count(key)) {
        out.bytes_prefetch_used += up_transfer_bytes(ex);
        batch.bytes_used += up_transfer_bytes(ex);
      } else {
        out.bytes_from_cache += up_transfer_bytes(ex);
      }
      out.bytes_demanded += up_transfer_bytes(ex);

      std::uint64_t pop = 0;
      std::uint64_t miss = 0;
      std::vector<std::uint8_t> miss_ch(d_i, 0);
      for (std::uint32_t c = 0; c < d_i; ++c) {
        if (!mask[c]) continue;
        ++pop;
        out.bytes_demanded += st.rec_bytes;
        if (!st.cache.channel_resident(key, c)) {
          miss_ch[c] = 1;
          ++miss;
        } else if (batch.has_channel(key, c)) {
          out.bytes_prefetch_used += st.rec_bytes;
          batch.bytes_used += st.rec_bytes;
        } else {
          out.bytes_from_cache += st.rec_bytes;
        }
      }

      if (sync_up || miss) {
        // Synchronous fetch of whatever is missing. Granularity follows the
        // channel mode: full mode always moves whole entries, the predictive
        // modes move exactly the missing records. Bytes beyond the demanded
        // set (full mode's padding) count as wasted, like unused prefetch.
        std::uint64_t fetch_n = 0;
        if (sync_up) {
          st.cache.add_up(key, up_transfer_bytes(ex), d_i);
          sync_bytes += up_transfer_bytes(ex);
          out.bytes_sync += up_transfer_bytes(ex);
          ++sync_requests;
          ++out.requests_up;
        }
        for (std::uint32_t c = 0; c < d_i; ++c) {
          bool fetch = opt.channel_mode == ChannelPrediction::full
                           ? !st.cache.channel_resident(key, c)
                           : miss_ch[c] != 0;
          if (!fetch) continue;
          st.cache.add_channel(key, c, st.rec_bytes, d_i);
          ++fetch_n;
          sync_bytes += st.rec_bytes;
          if (miss_ch[c])
            out.bytes_sync += st.rec_bytes;
          else
            out.bytes_prefetch_wasted += st.rec_bytes;
        }
        std::uint64_t cr = st.channel_requests(fetch_n);
        sync_requests += cr;
        out.requests_channel += cr;
      }

      flop_sum += 2.0 * d_h * d_i + static_cast<double>(pop) * 4.0 * d_h;
    }

    out.bytes_prefetch_wasted += batch.bytes - batch.bytes_used;

    double sync_s =
        sync_bytes || sync_requests
            ? transfer_time(sync_bytes, sync_requests, opt.transfer)
            : 0.0;
    double compute_s = opt.compute.c0 + opt.compute.c1 * flop_sum;
    double wall = compute_s + stall + sync_s;

    LayerTiming row;
    row.token = token;
    row.layer = layer;
    row.compute_s = compute_s;
    row.transfer_s = batch.time;
    row.stall_s = stall;
    row.sync_fetch_s = sync_s;
    out.rows.push_back(row);
    out.total_s += wall;
    prev_wall = wall;

    if (s + 1 < steps) {
      batch = issue_prefetch(st, traces[s + 1],
                             static_cast<std::uint32_t>((s + 1) % L),
                             x_for(s + 1), out);
    }
  }
  return out;
}

ComputeModel measure_compute_model(const CompressedModel &m, std::uint64_t seed,
                                   std::uint64_t tokens) {
  m.cfg.validate();
  if (tokens == 0) throw std::runtime_error("measure: tokens must be positive");
  const std::uint32_t L = m.cfg.layers;
  const std::uint32_t d_h = m.cfg.d_hidden;
  const std::uint32_t d_i = m.cfg.d_intermediate;

  std::vector<double> xs, ys;
  for (std::uint64_t t = 0; t < tokens; ++t) {
    Vec h = token_input(seed, t, d_h);
    for (std::uint32_t i = 0; i < L; ++i) {
      auto t0 = std::chrono::steady_clock::now();
      Vec next = layer_forward(m, i, h);
      auto t1 = std::chrono::steady_clock::now();
      LayerTrace tr = layer_forward_traced(m, i, h);
      double flops = 0.0;
      for (std::size_t j = 0; j < tr.experts.size(); ++j) {
        std::uint64_t pop = 0;
        for (std::uint8_t b : tr.masks[j]) pop += b;
        flops += 2.0 * d_h * d_i + static_cast<double>(pop) * 4.0 * d_h;
      }
      xs.push_back(flops);
      ys.push_back(std::chrono::duration<double>(t1 - t0).count());
      h = next;
    }
  }

  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double cov = 0, var = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    cov += (xs[i] - mx) * (ys[i] - my);
    var += (xs[i] - mx) * (xs[i] - mx);
  }
  ComputeModel cm;
  cm.c1 = var > 0 ? std::max(0.0, cov / var) : (mx > 0 ? my / mx : 0.0);
  cm.c0 = std::max(0.0, my - cm.c1 * mx);
  return cm;
}

std::vector<double> token_latencies(const DecodeTimeline &t) {
  std::vector<double> out(t.tokens, 0.0);
  for (const LayerTiming &r : t.rows)
    out[r.token] += r.compute_s + r.stall_s + r.sync_fetch_s;
  return out;
}

std::string timeline_csv(const DecodeTimeline &t) {
  Csv csv;
  csv.header = {"token", "layer", "compute_s", "transfer_s", "stall_s",
                "sync_fetch_s"};
  for (const LayerTiming &r : t.rows) {
    csv.rows.push_back({std::to_string(r.token), std::to_string(r.layer),
                        format_double(r.compute_s), format_double(r.transfer_s),
                        format_double(r.stall_s),
                        format_double(r.sync_fetch_s)});
  }
  return csv.serialize();
}

std::string summary_csv(const DecodeTimeline &t) {
  Csv csv;
  csv.header = {"tokens", "total_s", "tps", "bytes_transferred",
                "cache_hit_rate"};
  csv.rows.push_back({std::to_string(t.tokens), format_double(t.total_s),
                      format_double(t.tps()),
                      std::to_string(t.bytes_transferred()),
                      format_double(t.cache_hit_rate())});
  return csv.serialize();
}

}  // namespace floe
