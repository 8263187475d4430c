#ifndef FLOE_OFFLOAD_HPP
#define FLOE_OFFLOAD_HPP

#include <cstdint>
#include <list>
#include <string>
#include <unordered_map>
#include <vector>

#include "floe/model.hpp"
#include "floe/predictor.hpp"

// Host-to-device offloading laboratory: compact channel-record packing, a
// three-term parametric transfer cost model, an LRU expert cache under a
// byte budget, and a deterministic single-threaded event-loop simulator of
// pipelined decode (prefetch overlaps the previous layer's wall time;
// leftovers stall; unpredicted demands fetch synchronously).

namespace floe {

// A masked selection of channel records packed for transfer. Each record
// co-locates gate column i and down_t row i (2*d_hidden elements);
// element_bytes 2 packs f16 payloads (the wire format the byte accounting
// assumes), element_bytes 4 packs raw f32 and round-trips bit-exactly.
struct CompactSelection {
  std::uint32_t d_hidden = 0;
  std::uint32_t element_bytes = 0;
  std::vector<std::uint32_t> channels;  // ascending
  std::vector<std::uint8_t> payload;    // channels.size() records

  std::uint64_t bytes() const { return payload.size(); }
  std::uint64_t record_bytes() const {
    return 2ull * d_hidden * element_bytes;
  }
  std::uint64_t requests(std::uint32_t chunk_size) const;
};

CompactSelection pack_compact(const CompressedExpert &e,
                              const std::vector<std::uint8_t> &mask,
                              std::uint32_t element_bytes);

// Recovers the selected gate columns / down rows as f32, in record order.
// Exact for element_bytes 4; f16 rounding applies for element_bytes 2.
void unpack_compact(const CompactSelection &sel, Vec &gate_cols, Vec &down_rows);

struct TransferModel {
  double bandwidth = 25e9;        // wire bytes/second
  double request_overhead = 5e-6; // seconds per request
  double pack_rate = 100e9;       // host packing bytes/second
  std::uint32_t streams = 1;      // concurrent async requests

  void validate() const;
};

// time = requests*overhead/streams + bytes/pack_rate + bytes/bandwidth.
double transfer_time(std::uint64_t bytes, std::uint64_t requests,
                     const TransferModel &tm);

// LRU cache of per-(layer, expert) entries under a byte budget. An entry
// tracks whether the quantized up projection is resident and which channel
// records are; insertion touches the entry and evicts least-recently-used
// whole entries until the budget holds.
class ExpertCache {
 public:
  explicit ExpertCache(std::uint64_t capacity);

  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t used() const { return used_; }
  bool up_resident(std::uint64_t key) const;
  bool channel_resident(std::uint64_t key, std::uint32_t ch) const;
  // Returns bytes newly inserted (0 when already resident).
  std::uint64_t add_up(std::uint64_t key, std::uint64_t up_bytes,
                       std::uint32_t d_intermediate);
  std::uint64_t add_channel(std::uint64_t key, std::uint32_t ch,
                            std::uint64_t ch_bytes,
                            std::uint32_t d_intermediate);
  void touch(std::uint64_t key);
  // Keys from least to most recently used, for tests.
  std::vector<std::uint64_t> lru_order() const;

 private:
  struct Entry {
    bool up = false;
    std::vector<std::uint8_t> ch;
    std::uint64_t bytes = 0;
    std::list<std::uint64_t>::iterator pos;
  };
  Entry &touch_entry(std::uint64_t key, std::uint32_t d_intermediate);
  void evict_over_budget(std::uint64_t keep_key);

  std::uint64_t capacity_ = 0;
  std::uint64_t used_ = 0;
  std::list<std::uint64_t> order_;  // front = least recently used
  std::unordered_map<std::uint64_t, Entry> entries_;
};

enum class ExpertPrediction { oracle, learned, none };
enum class ChannelPrediction { oracle, reuse, full };

struct ComputeModel {
  double c0 = 0.0;  // seconds per MoE block
  double c1 = 0.0;  // seconds per flop
};

struct SimOptions {
  std::uint64_t tokens = 16;
  std::uint64_t seed = 0;
  ExpertPrediction expert_mode = ExpertPrediction::oracle;
  ChannelPrediction channel_mode = ChannelPrediction::oracle;
  std::uint32_t prefetch_count = 0;  // 0 -> model top_k
  std::uint64_t vram_budget = 0;     // cache capacity, bytes
  std::uint32_t chunk_size = 64;     // channel records per transfer request
  std::uint32_t element_bytes = 2;   // wire size of channel-record elements
  bool compact_layout = true;        // false: gate/down move as separate records
  TransferModel transfer;
  ComputeModel compute;
};

struct LayerTiming {
  std::uint64_t token = 0;
  std::uint32_t layer = 0;
  double compute_s = 0.0;
  double transfer_s = 0.0;    // duration of this layer's prefetch batch
  double stall_s = 0.0;       // prefetch remainder not hidden by the window
  double sync_fetch_s = 0.0;  // mispredicted demand fetched at layer start
};

struct DecodeTimeline {
  std::vector<LayerTiming> rows;
  std::uint64_t tokens = 0;
  double total_s = 0.0;

  // Exact byte accounting. Every demanded byte is classified at demand time:
  // already resident (cache), arrived in this layer's prefetch (used), or
  // fetched synchronously. Prefetched bytes never demanded in their layer
  // count as wasted (they stay cached and may hit later).
  std::uint64_t bytes_demanded = 0;
  std::uint64_t bytes_from_cache = 0;
  std::uint64_t bytes_prefetch_used = 0;
  std::uint64_t bytes_sync = 0;
  std::uint64_t bytes_prefetch_wasted = 0;

  // Transfer request counts (prefetch and sync combined), split by payload
  // kind. Channel requests double when the compact layout is disabled.
  std::uint64_t requests_up = 0;
  std::uint64_t requests_channel = 0;

  std::uint64_t bytes_transferred() const {
    return bytes_prefetch_used + bytes_prefetch_wasted + bytes_sync;
  }
  double tps() const { return total_s > 0 ? tokens / total_s : 0.0; }
  double cache_hit_rate() const {
    return bytes_demanded
               ? static_cast<double>(bytes_from_cache) / bytes_demanded
               : 0.0;
  }
};

// Wire-size constants the simulator charges per item.
std::uint64_t up_transfer_bytes(const CompressedExpert &e);
std::uint64_t channel_record_bytes(std::uint32_t d_hidden,
                                   std::uint32_t element_bytes);
std::uint64_t full_expert_bytes(const CompressedExpert &e,
                                std::uint32_t element_bytes);

// Deterministic pipelined decode. The predictor may be null unless
// expert_mode is learned. Errors if the budget cannot hold one full
// compressed expert.
DecodeTimeline simulate_decode(const CompressedModel &m,
                               const InterExpertPredictor *predictor,
                               const SimOptions &opt);

// Measures c0/c1 on this host by timing sparse blocks of the given model.
// Wall-clock based: NOT reproducible across runs; prefer explicit constants
// anywhere determinism matters.
ComputeModel measure_compute_model(const CompressedModel &m,
                                   std::uint64_t seed, std::uint64_t tokens);

// Wall time of each token: sum over its layers of compute + stall + sync.
std::vector<double> token_latencies(const DecodeTimeline &t);

// CSV emission. Timeline: token,layer,compute_s,transfer_s,stall_s,
// sync_fetch_s. Summary: tokens,total_s,tps,bytes_transferred,cache_hit_rate.
std::string timeline_csv(const DecodeTimeline &t);
std::string summary_csv(const DecodeTimeline &t);

}  // namespace floe

#endif
