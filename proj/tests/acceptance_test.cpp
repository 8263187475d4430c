// Release gate. Each check prints one PASS/FAIL line; the process exits
// with the number of failed checks. Check 11 is a hardware measurement and
// is reported as informational: its line shows the measured ratio but it
// does not affect the exit code.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "floe/io.hpp"
#include "floe/la.hpp"
#include "floe/model.hpp"
#include "floe/offload.hpp"
#include "floe/predictor.hpp"
#include "floe/quant.hpp"
#include "floe/rng.hpp"
#include "floe/sparsify.hpp"
#include "floe/theory.hpp"

using namespace floe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  double limit_s = 0.0;  // 0 = no stated budget
};

ExpertWeights seeded_expert(std::uint32_t dh, std::uint32_t di,
                            std::uint64_t seed) {
  ExpertWeights e;
  e.d_hidden = dh;
  e.d_intermediate = di;
  const float sd = 1.0f / std::sqrt(static_cast<float>(dh));
  auto fill = [&](Vec &v, std::uint64_t stream) {
    v.resize(static_cast<std::size_t>(dh) * di);
    Rng rng(seed, stream);
    for (float &w : v) w = rng.normal_f() * sd;
  };
  fill(e.gate, 1);
  fill(e.up, 2);
  fill(e.down_t, 3);
  return e;
}

Vec seeded_input(std::uint32_t dh, std::uint64_t seed) {
  Vec x(dh);
  Rng rng(seed, 4);
  for (float &v : x) v = rng.normal_f();
  return x;
}

double rel_err(const Vec &got, const Vec &ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    double d = static_cast<double>(got[i]) - ref[i];
    num += d * d;
    den += static_cast<double>(ref[i]) * ref[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

Vec up_values(const CompressedExpert &e, const Vec &x) {
  Vec v(e.d_intermediate);
  qgemv_channels(e.up_q, e.d_hidden, x.data(), v.data());
  return v;
}

float median_magnitude(const Vec &v) {
  std::vector<float> mags(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) mags[i] = std::fabs(v[i]);
  return calibrate_threshold(mags, 0.5);
}

// Masked-dense reference: all channels evaluated, sub-threshold products
// zeroed, everything accumulated in channel order.
Vec masked_dense(const CompressedExpert &e, const Vec &x, const Vec &v,
                 float t) {
  Vec y(e.d_hidden, 0.0f);
  for (std::uint32_t c = 0; c < e.d_intermediate; ++c) {
    float s = std::fabs(v[c]) >= t
                  ? silu(dot_f32(e.gate_ch(c), x.data(), e.d_hidden)) * v[c]
                  : 0.0f;
    for (std::uint32_t k = 0; k < e.d_hidden; ++k)
      y[k] += s * e.down_ch(c)[k];
  }
  return y;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// --- check 1 -------------------------------------------------------------

Outcome sparse_kernel_oracle() {
  double worst_masked = 0.0, worst_dense = 0.0, worst_float = 0.0;
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    ExpertWeights e = seeded_expert(64, 256, 1000 + trial);
    Vec x = seeded_input(64, 2000 + trial);
    CompressedExpert ce = compress_expert(e, 8, 64, 0.0f);
    Vec v = up_values(ce, x);

    // Masked-kernel agreement against the masked-dense reference.
    ce.threshold = median_magnitude(v);
    Vec got = expert_forward_sparse(ce, x);
    Vec ref = masked_dense(ce, x, v, ce.threshold);
    worst_masked = std::max(worst_masked, rel_err(got, ref));

    // t=0 keeps every channel, so the kernel must reproduce the plain dense
    // composition over the weights it actually holds. The dense reference
    // shares the quantized up projection: 8-bit min-max rounding alone sits
    // near 3e-3 relative against the float weights for any group size, so a
    // float-weight reference could never meet the 1e-3 gate (that residual
    // is tracked separately below).
    ce.threshold = 0.0f;
    Vec got0 = expert_forward_sparse(ce, x);
    ExpertWeights deq = e;
    deq.up = dequantize(ce.up_q);
    worst_dense = std::max(worst_dense, rel_err(got0, expert_forward(deq, x)));
    worst_float = std::max(worst_float, rel_err(got0, expert_forward(e, x)));
  }
  Outcome o;
  o.pass = worst_masked <= 1e-5 && worst_dense <= 1e-3;
  o.detail = "max rel err: masked " + fmt(worst_masked) + ", t=0 dense " +
             fmt(worst_dense) + " (vs float weights " + fmt(worst_float) +
             ")";
  o.limit_s = 10.0;
  return o;
}

// --- check 2 -------------------------------------------------------------

Outcome nan_poison_soundness() {
  const float qnan = std::nanf("");
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    ExpertWeights e = seeded_expert(16, 32, 5000 + trial);
    Vec x = seeded_input(16, 6000 + trial);
    CompressedExpert ce = compress_expert(e, 8, 16, 0.0f);
    Vec v = up_values(ce, x);
    ce.threshold = median_magnitude(v);
    Vec clean = expert_forward_sparse(ce, x);

    CompressedExpert poisoned = ce;
    for (std::uint32_t c = 0; c < ce.d_intermediate; ++c) {
      if (std::fabs(v[c]) >= ce.threshold) continue;
      for (std::uint32_t k = 0; k < ce.d_hidden; ++k) {
        poisoned.gate[static_cast<std::size_t>(c) * 16 + k] = qnan;
        poisoned.down_t[static_cast<std::size_t>(c) * 16 + k] = qnan;
      }
    }
    Vec got = expert_forward_sparse(poisoned, x);
    for (std::size_t k = 0; k < got.size(); ++k) {
      if (!std::isfinite(got[k]) || got[k] != clean[k]) {
        Outcome o;
        o.detail = "NaN leaked on trial " + std::to_string(trial);
        return o;
      }
    }
  }
  Outcome o;
  o.pass = true;
  o.detail = "1000 poisoned trials bit-equal to clean runs";
  return o;
}

// --- check 3 -------------------------------------------------------------

Outcome calibration_accuracy() {
  MoEConfig cfg;
  cfg.layers = 2;
  cfg.experts = 4;
  cfg.top_k = 2;
  cfg.d_hidden = 32;
  cfg.d_intermediate = 64;
  cfg.seed = 71;
  MoEModel m = gen_model(cfg);

  std::string detail;
  bool pass = true;
  for (double k : {0.5, 0.7, 0.8, 0.9}) {
    ThresholdTable t = calibrate_model(m, 11, 256, k);
    // Held-out activations: fresh token stream through the same model.
    StatsReport held = collect_stats(m, 12, 128, 1u << 20);
    std::uint64_t below = 0, total = 0;
    for (std::uint32_t l = 0; l < cfg.layers; ++l)
      for (std::uint32_t e = 0; e < cfg.experts; ++e) {
        for (float v : held.samples.at(l, e)) below += v < t.at(l, e);
        total += held.samples.at(l, e).size();
      }
    double realized = static_cast<double>(below) / static_cast<double>(total);
    if (std::fabs(realized - k) > 0.02) pass = false;
    detail += (detail.empty() ? "" : ", ") + fmt(realized) + "@" + fmt(k);
  }
  return {pass, "held-out sparsity " + detail, 30.0};
}

// --- check 4 -------------------------------------------------------------

Outcome compression_arithmetic() {
  double nominal = compression_ratio(4096, 14336, 2, 64, 0.10, false);
  double with_meta = compression_ratio(4096, 14336, 2, 64, 0.10, true);
  Outcome o;
  o.pass = nominal >= 9.0 && nominal <= 9.5 && with_meta >= 8.0;
  o.detail = "nominal " + fmt(nominal) + "x, with metadata " +
             fmt(with_meta) + "x";
  o.limit_s = 1.0;
  return o;
}

// --- check 5 -------------------------------------------------------------

Outcome closed_forms_vs_monte_carlo() {
  const std::uint64_t n = 1000000;
  bool pass = true;
  double worst_sigmas = 0.0;
  std::string note;
  std::vector<double> etas = default_eta_grid();
  std::vector<double> ps = default_p_grid();
  for (std::size_t i = 0; i < etas.size(); ++i) {
    double eta = etas[i];
    double f = gauss_removed_energy(eta);
    McEstimate fmc = mc_gauss_removed_energy(eta, n, 900 + i);
    worst_sigmas = std::max(worst_sigmas, std::fabs(fmc.mean - f) / fmc.se);
    if (std::fabs(fmc.mean - f) > 3.0 * fmc.se) {
      pass = false;
      note = " F mismatch at eta=" + fmt(eta);
    }
    for (std::size_t j = 0; j < ps.size(); ++j) {
      double p = ps[j];
      double g = shifted_exp_removed_energy(eta, p);
      if (f >= g) {
        pass = false;
        note = " F !< G at (" + fmt(eta) + "," + fmt(p) + ")";
      }
      McEstimate gmc = mc_shifted_exp_removed_energy(
          eta, p, 1.0, n, 1000 + 10 * i + j);
      worst_sigmas =
          std::max(worst_sigmas, std::fabs(gmc.mean - g) / gmc.se);
      if (std::fabs(gmc.mean - g) > 3.0 * gmc.se) {
        pass = false;
        note = " G mismatch at (" + fmt(eta) + "," + fmt(p) + ")";
      }
    }
  }
  return {pass,
          "36 Monte-Carlo cells, worst deviation " + fmt(worst_sigmas) +
              " SE" + note,
          60.0};
}

// --- check 6 -------------------------------------------------------------

Outcome numeric_anchors() {
  double e4 = std::exp(-4.0);
  struct Anchor {
    double got, want;
  };
  std::vector<Anchor> anchors = {
      {gauss_boundary_term(e4), 0.116},  {neglected_terms_bound(e4), 0.108},
      {gauss_boundary_term(0.5), 0.429}, {neglected_terms_bound(0.5), 0.392},
      {norm_quantile(0.75), 0.674},      {norm_quantile(0.975), 1.960},
  };
  bool pass = true;
  double worst = 0.0;
  for (const Anchor &a : anchors) {
    worst = std::max(worst, std::fabs(a.got - a.want));
    if (std::fabs(a.got - a.want) > 1e-3) pass = false;
  }
  double want = 5.0 * std::exp(-4.0);
  double tail = exp_tail_ratio(2.0);
  bool tail_ok = std::fabs(tail - want) <= 1e-12 * want;
  return {pass && tail_ok,
          "six anchors within " + fmt(worst) + "; tail ratio off by " +
              fmt(std::fabs(tail - want) / want) + " rel",
          0.0};
}

// --- check 7 -------------------------------------------------------------

Outcome loss_ordering() {
  bool pass = true;
  std::string detail;
  for (double eta : {0.1, 0.3, 0.5}) {
    LossReport r = mc_losses(1.0, 11.0, 0.28, eta, 1000000, 77);
    double gap1 = r.l_up - r.l_down;
    double se1 = std::sqrt(r.se_down * r.se_down + r.se_up * r.se_up);
    double gap2 = r.l_gate - r.l_up;
    double se2 = std::sqrt(r.se_up * r.se_up + r.se_gate * r.se_gate);
    if (!(gap1 > 5.0 * se1 && gap2 > 5.0 * se2)) pass = false;
    detail += (detail.empty() ? "gaps " : ", ") + fmt(gap1 / se1) + "/" +
              fmt(gap2 / se2) + " SE@" + fmt(eta);
  }
  return {pass, detail, 0.0};
}

// --- check 8 -------------------------------------------------------------

Outcome reduction_identities() {
  ProjectionCheck pc = projection_energy_check(32, 32, 0.9, 1.2, 1000, 31);
  double du = std::fabs(pc.unit_x.mean - pc.expected_unit) / pc.unit_x.se;
  double di = std::fabs(pc.iid_x.mean - pc.expected_iid) / pc.iid_x.se;
  McEstimate cross = removed_cross_check(0.674, 1000000, 32);
  double dc = std::fabs(cross.mean) / cross.se;
  bool pass = du <= 4.0 && di <= 4.0 && dc <= 4.0;
  return {pass,
          "projection " + fmt(du) + "/" + fmt(di) + " SE, cross-term " +
              fmt(dc) + " SE",
          0.0};
}

// --- check 9 -------------------------------------------------------------

RoutingDataset slice(const RoutingDataset &d, std::size_t b, std::size_t e) {
  RoutingDataset out;
  out.experts = d.experts;
  out.d_hidden = d.d_hidden;
  out.top_k = d.top_k;
  out.x.assign(d.x.begin() + b, d.x.begin() + e);
  out.labels.assign(d.labels.begin() + b, d.labels.begin() + e);
  return out;
}

double fit_recall(const SingleLayerFit &fit, const RoutingDataset &d) {
  std::vector<std::vector<std::uint32_t>> pred(d.x.size());
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    Vec scores;
    gemv(fit.w, d.x[i], scores);
    for (std::size_t e = 0; e < scores.size(); ++e) scores[e] += fit.b[e];
    pred[i] = top_k(scores, d.top_k);
  }
  return eval_sets(pred, d.labels).recall;
}

Outcome predictor_construction() {
  bool pass = true;
  std::string detail;

  RoutingDataset all = synthetic_routing_dataset(41, 32, 8, 2, 800, 0.5f);
  TrainOptions opt;  // lr 1.0, 2000 epochs
  SingleLayerFit fit = train_logistic_ova(slice(all, 0, 400), opt);
  double train_recall = fit_recall(fit, slice(all, 0, 400));
  double held_recall = fit_recall(fit, slice(all, 400, 800));
  if (!(train_recall >= 0.99 && held_recall >= 0.9)) pass = false;
  detail += "realizable " + fmt(train_recall) + "/" + fmt(held_recall);

  RoutingDataset chance_train = chance_routing_dataset(42, 32, 8, 2, 400);
  RoutingDataset chance_held = chance_routing_dataset(43, 32, 8, 2, 400);
  TrainOptions copt;
  copt.epochs = 300;
  SingleLayerFit cfit = train_logistic_ova(chance_train, copt);
  double chance_recall = fit_recall(cfit, chance_held);
  if (std::fabs(chance_recall - 0.25) > 0.1) pass = false;
  detail += ", chance " + fmt(chance_recall);

  MoEConfig cfg;
  cfg.layers = 3;
  cfg.experts = 4;
  cfg.top_k = 2;
  cfg.d_hidden = 32;
  cfg.d_intermediate = 64;
  cfg.seed = 45;
  MoEModel m = gen_model(cfg);
  auto points =
      reuse_drift_recalls(m, {0.0f, 0.01f, 0.1f, 1.0f}, 0.9, 46, 96, 48);
  if (points[0].recall != 1.0) pass = false;
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].recall > points[i - 1].recall + 1e-12) pass = false;
  detail += ", reuse";
  for (const DriftPoint &p : points) detail += " " + fmt(p.recall);

  return {pass, detail, 60.0};
}

// --- check 10 ------------------------------------------------------------

CompressedModel sim_model(std::uint32_t top_k) {
  MoEConfig cfg;
  cfg.layers = 2;
  cfg.experts = 4;
  cfg.top_k = top_k;
  cfg.d_hidden = 32;
  cfg.d_intermediate = 64;
  cfg.seed = 51;
  MoEModel m = gen_model(cfg);
  ThresholdTable t = calibrate_model(m, 52, 64, 0.9);
  return compress_model(m, t, 8, 16);
}

bool conserved(const DecodeTimeline &t) {
  return t.bytes_demanded ==
             t.bytes_from_cache + t.bytes_prefetch_used + t.bytes_sync &&
         t.bytes_transferred() ==
             t.bytes_prefetch_used + t.bytes_prefetch_wasted + t.bytes_sync;
}

Outcome simulator_properties() {
  CompressedModel m = sim_model(2);
  std::uint64_t full = full_expert_bytes(m.layers[0].experts[0], 2);
  bool pass = true;
  std::string detail;

  // (a) Perfect prediction with transfers hidden by compute: zero stall,
  // total exactly the sum of compute terms.
  SimOptions opt;
  opt.tokens = 6;
  opt.seed = 53;
  opt.vram_budget = 10u << 20;
  opt.compute.c0 = 1e-3;
  DecodeTimeline perfect = simulate_decode(m, nullptr, opt);
  double compute_sum = 0.0;
  bool zero_stall = true;
  for (const LayerTiming &r : perfect.rows) {
    compute_sum += r.compute_s;
    if (r.stall_s != 0.0 || r.sync_fetch_s != 0.0) zero_stall = false;
  }
  bool a_ok = zero_stall && perfect.total_s == compute_sum;
  if (!a_ok) pass = false;
  detail += std::string("overlap ") + (a_ok ? "exact" : "BROKEN");

  // (b) No prefetch is strictly slower on the same config.
  SimOptions none = opt;
  none.expert_mode = ExpertPrediction::none;
  DecodeTimeline cold = simulate_decode(m, nullptr, none);
  bool b_ok = cold.total_s > perfect.total_s;
  if (!b_ok) pass = false;
  detail += b_ok ? ", no-prefetch slower" : ", no-prefetch NOT slower";

  // (c) Throughput is monotone in the cache budget.
  SimOptions sweep = opt;
  sweep.channel_mode = ChannelPrediction::full;
  sweep.tokens = 8;
  double prev_tps = -1.0;
  bool c_ok = true;
  for (std::uint64_t mult : {1, 2, 3, 5, 8}) {
    sweep.vram_budget = mult * full;
    DecodeTimeline t = simulate_decode(m, nullptr, sweep);
    if (t.tps() < prev_tps - 1e-12 * std::max(1.0, prev_tps)) c_ok = false;
    prev_tps = t.tps();
  }
  if (!c_ok) pass = false;
  detail += c_ok ? ", tps monotone" : ", tps NOT monotone";

  // (d) The compact layout moves channel pairs in one request.
  SimOptions lay = opt;
  lay.chunk_size = 4;
  DecodeTimeline compact = simulate_decode(m, nullptr, lay);
  lay.compact_layout = false;
  DecodeTimeline split = simulate_decode(m, nullptr, lay);
  bool d_ok = split.requests_channel == 2 * compact.requests_channel &&
              split.requests_up == compact.requests_up;
  if (!d_ok) pass = false;
  detail += d_ok ? ", split 2x requests" : ", split request count WRONG";

  // (e) Byte conservation on varied configurations.
  bool e_ok = conserved(perfect) && conserved(cold) && conserved(split);
  for (ChannelPrediction cm :
       {ChannelPrediction::oracle, ChannelPrediction::reuse,
        ChannelPrediction::full}) {
    SimOptions v = opt;
    v.channel_mode = cm;
    v.vram_budget = 2 * full;
    if (!conserved(simulate_decode(m, nullptr, v))) e_ok = false;
  }
  if (!e_ok) pass = false;
  detail += e_ok ? ", bytes conserved" : ", byte conservation BROKEN";

  return {pass, detail, 60.0};
}

// --- check 11 (informational) ---------------------------------------------

Outcome masked_kernel_speedup() {
  const std::uint32_t dh = 4096, di = 14336;
  ExpertWeights e = seeded_expert(dh, di, 99);
  Vec x = seeded_input(dh, 100);
  std::vector<float> mags(di);
  for (std::uint32_t c = 0; c < di; ++c)
    mags[c] = std::fabs(dot_f32(e.up_ch(c), x.data(), dh));
  float t90 = calibrate_threshold(mags, 0.9);

  auto time_best = [](const std::function<void()> &fn) {
    fn();  // warm-up
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      auto t0 = std::chrono::steady_clock::now();
      fn();
      std::chrono::duration<double> dt =
          std::chrono::steady_clock::now() - t0;
      best = std::min(best, dt.count());
    }
    return best;
  };

  volatile float sink = 0.0f;
  double dense_s = time_best([&] {
    Vec y = expert_forward(e, x);
    sink = sink + y[0];
  });
  double sparse_s = time_best([&] {
    Vec y = expert_forward_sparse(e, x, t90);
    sink = sink + y[0];
  });
  double ratio = dense_s / sparse_s;
  Outcome o;
  o.pass = ratio >= 1.2;
  o.detail = "dense " + fmt(dense_s * 1e3) + " ms vs masked " +
             fmt(sparse_s * 1e3) + " ms: " + fmt(ratio) + "x";
  return o;
}

// --- check 12 ------------------------------------------------------------

int cli(const std::vector<std::string> &args) {
  std::vector<const char *> argv;
  argv.push_back("floe");
  for (const std::string &a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

bool run_pipeline(const fs::path &dir, const std::string &workers) {
  fs::create_directories(dir);
  auto at = [&](const char *name) { return (dir / name).string(); };
  std::vector<std::vector<std::string>> cmds = {
      {"gen-model", "--layers", "2", "--experts", "4", "--topk", "2", "--dh",
       "32", "--di", "64", "--seed", "7", "--workers", workers, "-o",
       at("model.bin")},
      {"calibrate", "--model", at("model.bin"), "--sparsity", "0.9",
       "--tokens", "96", "--seed", "3", "--workers", workers, "-o",
       at("thresholds.csv")},
      {"compress", "--model", at("model.bin"), "--thresholds",
       at("thresholds.csv"), "--bits", "8", "--group-size", "16", "-o",
       at("model.flq")},
      {"run", "--model", at("model.flq"), "--tokens", "4", "--seed", "1",
       "-o", at("run.csv")},
      {"predict-eval", "--model", at("model.bin"), "--mode", "inter",
       "--train-tokens", "48", "--eval-tokens", "24", "--epochs", "150",
       "--seed", "4", "--save-predictor", at("pred.bin"), "-o",
       at("inter.csv")},
      {"predict-eval", "--model", at("model.bin"), "--mode", "intra",
       "--train-tokens", "32", "--eval-tokens", "16", "--sparsity", "0.9",
       "--seed", "4", "-o", at("intra.csv")},
      {"simulate", "--model", at("model.flq"), "--predictor", at("pred.bin"),
       "--expert-mode", "learned", "--channel-mode", "reuse",
       "--vram-budget", "1000000", "--tokens", "4", "--seed", "2", "--c0",
       "1e-3", "--c1", "0", "--timeline", at("timeline.csv"), "-o",
       at("summary.csv")},
      {"theory", "--grid", "default", "-o", at("fg.csv")},
      {"theory", "--losses", "--samples", "40000", "--seed", "5",
       "--workers", workers, "-o", at("losses.csv")},
  };
  for (const auto &c : cmds)
    if (cli(c) != 0) return false;
  return true;
}

Outcome pipeline_determinism() {
  fs::path base = fs::temp_directory_path() / "floe_acceptance";
  fs::remove_all(base);
  fs::path a = base / "w1", b = base / "w3";
  if (!run_pipeline(a, "1") || !run_pipeline(b, "3"))
    return {false, "pipeline command failed", 0.0};

  const char *artifacts[] = {"model.bin",    "thresholds.csv", "model.flq",
                             "run.csv",      "inter.csv",      "intra.csv",
                             "pred.bin",     "timeline.csv",   "summary.csv",
                             "fg.csv",       "losses.csv"};
  for (const char *name : artifacts) {
    if (read_file((a / name).string()) != read_file((b / name).string()))
      return {false, std::string("artifact differs: ") + name, 0.0};
  }
  return {true, "11 artifacts byte-identical across worker counts 1 and 3",
          0.0};
}

}  // namespace

int main() {
  struct Check {
    const char *name;
    std::function<Outcome()> fn;
    bool informational;
  };
  const std::vector<Check> checks = {
      {"sparse kernel matches the masked-dense reference",
       sparse_kernel_oracle, false},
      {"unmasked channels never touch the output", nan_poison_soundness,
       false},
      {"calibrated thresholds hit their sparsity target on held-out data",
       calibration_accuracy, false},
      {"hybrid compression ratio lands in the expected band",
       compression_arithmetic, false},
      {"removed-energy closed forms agree with Monte Carlo, gaussian below "
       "shifted-exponential",
       closed_forms_vs_monte_carlo, false},
      {"numeric anchor values reproduce", numeric_anchors, false},
      {"masking losses order down <= up < gate with wide margins",
       loss_ordering, false},
      {"projection energy and removed-cross-term identities hold",
       reduction_identities, false},
      {"predictors: realizable fits, chance stays chance, reuse degrades "
       "monotonically",
       predictor_construction, false},
      {"decode simulator: overlap, monotone tps, compact layout, byte "
       "conservation",
       simulator_properties, false},
      {"masked kernel speedup at production shape", masked_kernel_speedup,
       true},
      {"full pipeline is byte-reproducible at any worker count",
       pipeline_determinism, false},
  };

  int failures = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = checks[i].fn();
    } catch (const std::exception &e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    bool in_budget = o.limit_s == 0.0 || dt.count() <= o.limit_s;
    bool pass = o.pass && in_budget;
    if (!pass && !checks[i].informational) failures++;
    std::printf("%s %2zu %s%s (%s) [%.1fs]\n", pass ? "PASS" : "FAIL", i + 1,
                checks[i].informational ? "[informational] " : "",
                checks[i].name, o.detail.c_str(), dt.count());
    if (!in_budget)
      std::printf("     exceeded the %.0fs budget\n", o.limit_s);
  }
  if (failures == 0)
    std::printf("all required checks passed\n");
  else
    std::printf("%d required check(s) failed\n", failures);
  return failures;
}
