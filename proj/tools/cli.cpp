#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "floe/io.hpp"
#include "floe/model.hpp"
#include "floe/offload.hpp"
#include "floe/predictor.hpp"
#include "floe/sparsify.hpp"
#include "floe/theory.hpp"

namespace floe {

namespace {

// Usage problems detected after parsing (bad flag combinations) exit 2 like
// parser errors do.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit(const std::string &text, const std::string &path) {
  if (path.empty())
    std::cout << text;
  else
    write_text_atomic(path, text);
}

struct GenModelArgs {
  MoEConfig cfg;
  unsigned workers = 1;
  std::string out;
};

void cmd_gen_model(const GenModelArgs &a) {
  MoEModel m = gen_model(a.cfg, a.workers);
  save_model(m, a.out);
}

struct CalibrateArgs {
  std::string model;
  double sparsity = 0.9;
  std::uint64_t tokens = 256;
  std::uint64_t sample_cap = kReservoirCap;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  double drift_scale = 1.0;
  std::string out;
};

void cmd_calibrate(const CalibrateArgs &a) {
  MoEModel m = load_model(a.model);
  ThresholdTable t =
      calibrate_model(m, a.seed, a.tokens, a.sparsity, a.sample_cap, a.workers,
                      static_cast<float>(a.drift_scale));
  t.save(a.out);
}

struct CompressArgs {
  std::string model;
  std::string thresholds;
  unsigned bits = 8;
  std::uint32_t group_size = 64;
  std::string out;
};

void cmd_compress(const CompressArgs &a) {
  MoEModel m = load_model(a.model);
  ThresholdTable t = ThresholdTable::load(a.thresholds);
  CompressedModel cm = compress_model(m, t, a.bits, a.group_size);
  save_compressed(cm, a.out);
}

struct RunArgs {
  std::string model;
  std::uint64_t tokens = 16;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_run(const RunArgs &a) {
  CompressedModel m = load_compressed(a.model);
  Csv csv;
  csv.header = {"token", "layer", "density", "out_norm"};
  for (std::uint64_t t = 0; t < a.tokens; ++t) {
    Vec h = token_input(a.seed, t, m.cfg.d_hidden);
    for (std::uint32_t i = 0; i < m.cfg.layers; ++i) {
      LayerTrace tr = layer_forward_traced(m, i, h);
      std::uint64_t kept = 0;
      for (const auto &mask : tr.masks)
        for (std::uint8_t b : mask) kept += b;
      double density =
          static_cast<double>(kept) /
          (static_cast<double>(tr.masks.size()) * m.cfg.d_intermediate);
      csv.rows.push_back({std::to_string(t), std::to_string(i),
                          format_double(density),
                          format_double(l2_norm(tr.out))});
      h = tr.out;
    }
  }
  emit(csv.serialize(), a.out);
}

struct SimulateArgs {
  std::string model;
  std::string predictor;
  SimOptions opt;
  std::string expert_mode = "oracle";
  std::string channel_mode = "oracle";
  bool split_layout = false;
  double c0 = -1.0;
  double c1 = -1.0;
  bool auto_compute = false;
  std::uint64_t auto_tokens = 4;
  std::string timeline;
  std::string out;
};

ExpertPrediction parse_expert_mode(const std::string &s) {
  if (s == "oracle") return ExpertPrediction::oracle;
  if (s == "learned") return ExpertPrediction::learned;
  if (s == "none") return ExpertPrediction::none;
  throw UsageError("unknown expert mode: " + s);
}

ChannelPrediction parse_channel_mode(const std::string &s) {
  if (s == "oracle") return ChannelPrediction::oracle;
  if (s == "reuse") return ChannelPrediction::reuse;
  if (s == "full") return ChannelPrediction::full;
  throw UsageError("unknown channel mode: " + s);
}

void cmd_simulate(SimulateArgs &a) {
  CompressedModel m = load_compressed(a.model);

  // Budget feasibility is a runtime error (exit 1), and it is independent of
  // the compute model, so check it before complaining about missing flags.
  std::uint64_t need = 0;
  for (const CompressedLayer &l : m.layers)
    for (const CompressedExpert &e : l.experts)
      need = std::max(need, full_expert_bytes(e, a.opt.element_bytes));
  if (a.opt.vram_budget < need)
    throw std::runtime_error(
        "simulate: cache capacity below one full compressed expert");

  bool manual = a.c0 >= 0.0 || a.c1 >= 0.0;
  if (a.auto_compute && manual)
    throw UsageError("--auto-compute-model conflicts with --c0/--c1");
  if (!a.auto_compute && (a.c0 < 0.0 || a.c1 < 0.0))
    throw UsageError("simulate needs --c0 and --c1, or --auto-compute-model");

  a.opt.expert_mode = parse_expert_mode(a.expert_mode);
  a.opt.channel_mode = parse_channel_mode(a.channel_mode);
  a.opt.compact_layout = !a.split_layout;
  if (a.auto_compute) {
    a.opt.compute = measure_compute_model(m, a.opt.seed, a.auto_tokens);
  } else {
    a.opt.compute = ComputeModel{a.c0, a.c1};
  }

  InterExpertPredictor pred;
  const InterExpertPredictor *pp = nullptr;
  if (!a.predictor.empty()) {
    pred = InterExpertPredictor::load(a.predictor);
    pp = &pred;
  }
  DecodeTimeline t = simulate_decode(m, pp, a.opt);
  if (!a.timeline.empty()) write_text_atomic(a.timeline, timeline_csv(t));
  emit(summary_csv(t), a.out);
}

struct PredictEvalArgs {
  std::string model;
  std::string mode;
  std::uint64_t train_tokens = 384;
  std::uint64_t eval_tokens = 128;
  std::uint64_t seed = 0;
  double lr = 1.0;
  std::uint32_t epochs = 2000;
  double sparsity = 0.9;
  double drift_scale = 1.0;
  std::string save_predictor;
  std::string out;
};

void cmd_predict_eval(const PredictEvalArgs &a) {
  MoEModel m = load_model(a.model);
  Csv csv;
  csv.header = {"layer", "precision", "recall", "samples"};

  if (a.mode == "inter") {
    std::vector<RoutingDataset> train =
        build_routing_trace(m, a.seed, a.train_tokens);
    TrainOptions opt;
    opt.lr = a.lr;
    opt.epochs = a.epochs;
    TrainReport rep = train_inter(m, train, opt);
    if (!a.save_predictor.empty()) rep.predictor.save(a.save_predictor);

    std::vector<RoutingDataset> eval_trace =
        build_routing_trace(m, a.seed + 1, a.eval_tokens);
    for (std::uint32_t layer = 1; layer < m.cfg.layers; ++layer) {
      const RoutingDataset &d = eval_trace[layer - 1];
      std::vector<std::vector<std::uint32_t>> pred(d.x.size());
      for (std::size_t i = 0; i < d.x.size(); ++i)
        pred[i] = predict_experts(rep.predictor, d.x[i], layer, m.cfg.top_k);
      PredictionMetrics pm = eval_sets(pred, d.labels);
      csv.rows.push_back({std::to_string(layer), format_double(pm.precision),
                          format_double(pm.recall),
                          std::to_string(pm.samples)});
    }
  } else if (a.mode == "intra") {
    std::vector<PredictionMetrics> per = reuse_mask_metrics(
        m, static_cast<float>(a.drift_scale), a.sparsity, a.seed,
        a.train_tokens, a.eval_tokens);
    for (std::size_t layer = 1; layer < per.size() + 1; ++layer) {
      const PredictionMetrics &pm = per[layer - 1];
      csv.rows.push_back({std::to_string(layer), format_double(pm.precision),
                          format_double(pm.recall),
                          std::to_string(pm.samples)});
    }
  } else {
    throw UsageError("--mode must be inter or intra");
  }
  emit(csv.serialize(), a.out);
}

struct TheoryArgs {
  std::string grid = "default";
  bool losses = false;
  double sigma_up = 1.0;
  double lambda = 11.0;
  double c = 0.28;
  std::uint64_t samples = 1000000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string out;
};

void cmd_theory(const TheoryArgs &a) {
  if (a.grid != "default") throw UsageError("unknown grid: " + a.grid);
  std::string text;
  if (a.losses) {
    text = loss_table_csv(a.sigma_up, a.lambda, a.c, {0.1, 0.3, 0.5},
                          a.samples, a.seed, a.workers);
  } else {
    text = fg_table_csv(default_eta_grid(), default_p_grid());
  }
  emit(text, a.out);
}

struct BenchArgs {
  std::string model;
  std::uint64_t tokens = 8;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_bench(const BenchArgs &a) {
  CompressedModel m = load_compressed(a.model);
  ComputeModel cm = measure_compute_model(m, a.seed, a.tokens);
  Csv csv;
  csv.header = {"c0", "c1", "blocks"};
  csv.rows.push_back({format_double(cm.c0), format_double(cm.c1),
                      std::to_string(a.tokens * m.cfg.layers)});
  emit(csv.serialize(), a.out);
}

}  // namespace

int run_cli(int argc, const char *const *argv) {
  CLI::App app{"Desk-scale laboratory for on-the-fly MoE expert streaming"};
  app.require_subcommand(1);

  GenModelArgs gen;
  CLI::App *s_gen = app.add_subcommand(
      "gen-model", "Generate a deterministic synthetic MoE model");
  s_gen->add_option("--layers", gen.cfg.layers, "MoE block count")->required();
  s_gen->add_option("--experts", gen.cfg.experts, "Experts per layer")->required();
  s_gen->add_option("--topk", gen.cfg.top_k, "Experts routed per token")->required();
  s_gen->add_option("--dh", gen.cfg.d_hidden, "Hidden width")->required();
  s_gen->add_option("--di", gen.cfg.d_intermediate, "Intermediate width")->required();
  s_gen->add_option("--seed", gen.cfg.seed, "Generation seed")->required();
  s_gen->add_option("--workers", gen.workers, "Worker threads");
  s_gen->add_option("-o,--out", gen.out, "Output model path")->required();

  CalibrateArgs cal;
  CLI::App *s_cal = app.add_subcommand(
      "calibrate", "Calibrate per-(layer, expert) sparsity thresholds");
  s_cal->add_option("--model", cal.model, "Dense model path")->required();
  s_cal->add_option("--sparsity", cal.sparsity, "Target pruned fraction k")->required();
  s_cal->add_option("--tokens", cal.tokens, "Calibration tokens");
  s_cal->add_option("--sample-cap", cal.sample_cap, "Reservoir capacity");
  s_cal->add_option("--seed", cal.seed, "Token stream seed");
  s_cal->add_option("--workers", cal.workers, "Worker threads");
  s_cal->add_option("--drift-scale", cal.drift_scale, "Residual update scale");
  s_cal->add_option("-o,--out", cal.out, "Output thresholds CSV")->required();

  CompressArgs comp;
  CLI::App *s_comp = app.add_subcommand(
      "compress", "Quantize up projections and attach thresholds");
  s_comp->add_option("--model", comp.model, "Dense model path")->required();
  s_comp->add_option("--thresholds", comp.thresholds, "Thresholds CSV")->required();
  s_comp->add_option("--bits", comp.bits, "Quantization bits (1,2,3,4,8)");
  s_comp->add_option("--group-size", comp.group_size, "Quantization group size");
  s_comp->add_option("-o,--out", comp.out, "Output compressed model path")->required();

  RunArgs run;
  CLI::App *s_run = app.add_subcommand(
      "run", "Decode tokens through the compressed model, reporting density");
  s_run->add_option("--model", run.model, "Compressed model path")->required();
  s_run->add_option("--tokens", run.tokens, "Token count");
  s_run->add_option("--seed", run.seed, "Token stream seed");
  s_run->add_option("-o,--out", run.out, "Output CSV (stdout when omitted)");

  SimulateArgs sim;
  CLI::App *s_sim = app.add_subcommand(
      "simulate", "Replay decode through the offloading simulator");
  s_sim->add_option("--model", sim.model, "Compressed model path")->required();
  s_sim->add_option("--predictor", sim.predictor, "Expert predictor path");
  s_sim->add_option("--tokens", sim.opt.tokens, "Token count");
  s_sim->add_option("--seed", sim.opt.seed, "Token stream seed");
  s_sim->add_option("--expert-mode", sim.expert_mode,
                    "Expert prefetch mode: oracle|learned|none");
  s_sim->add_option("--channel-mode", sim.channel_mode,
                    "Channel fetch mode: oracle|reuse|full");
  s_sim->add_option("--prefetch-count", sim.opt.prefetch_count,
                    "Experts prefetched in learned mode (0 = top_k)");
  s_sim->add_option("--vram-budget", sim.opt.vram_budget,
                    "Expert cache capacity in bytes")->required();
  s_sim->add_option("--chunk-size", sim.opt.chunk_size,
                    "Channel records per transfer request");
  s_sim->add_option("--element-bytes", sim.opt.element_bytes,
                    "Wire bytes per channel-record element (2 or 4)");
  s_sim->add_flag("--split-layout", sim.split_layout,
                  "Move gate/down records separately (compact off)");
  s_sim->add_option("--bandwidth", sim.opt.transfer.bandwidth, "Bytes/second");
  s_sim->add_option("--req-overhead", sim.opt.transfer.request_overhead,
                    "Seconds per transfer request");
  s_sim->add_option("--pack-rate", sim.opt.transfer.pack_rate,
                    "Host packing bytes/second");
  s_sim->add_option("--streams", sim.opt.transfer.streams,
                    "Concurrent transfer streams");
  s_sim->add_option("--c0", sim.c0, "Per-block compute seconds");
  s_sim->add_option("--c1", sim.c1, "Per-flop compute seconds");
  s_sim->add_flag("--auto-compute-model", sim.auto_compute,
                  "Measure c0/c1 on this host (not reproducible)");
  s_sim->add_option("--auto-tokens", sim.auto_tokens,
                    "Tokens used by --auto-compute-model");
  s_sim->add_option("--timeline", sim.timeline, "Per-layer timeline CSV path");
  s_sim->add_option("-o,--out", sim.out, "Summary CSV (stdout when omitted)");

  PredictEvalArgs pe;
  CLI::App *s_pe = app.add_subcommand(
      "predict-eval", "Train/evaluate expert and channel predictors");
  s_pe->add_option("--model", pe.model, "Dense model path")->required();
  s_pe->add_option("--mode", pe.mode, "inter (expert sets) or intra (masks)")
      ->required();
  s_pe->add_option("--train-tokens", pe.train_tokens, "Training tokens");
  s_pe->add_option("--eval-tokens", pe.eval_tokens, "Held-out tokens");
  s_pe->add_option("--seed", pe.seed, "Token stream seed");
  s_pe->add_option("--lr", pe.lr, "Learning rate (inter)");
  s_pe->add_option("--epochs", pe.epochs, "Training epochs (inter)");
  s_pe->add_option("--sparsity", pe.sparsity, "Threshold target (intra)");
  s_pe->add_option("--drift-scale", pe.drift_scale, "Residual scale (intra)");
  s_pe->add_option("--save-predictor", pe.save_predictor,
                   "Write trained predictor here (inter)");
  s_pe->add_option("-o,--out", pe.out, "Metrics CSV (stdout when omitted)");

  TheoryArgs th;
  CLI::App *s_th = app.add_subcommand(
      "theory", "Closed-form and Monte-Carlo removed-energy tables");
  s_th->add_option("--grid", th.grid, "Grid name (default)");
  s_th->add_flag("--losses", th.losses, "Emit the masking-loss table instead");
  s_th->add_option("--sigma-up", th.sigma_up, "Up activation sigma");
  s_th->add_option("--lambda", th.lambda, "Gate exponential rate");
  s_th->add_option("--c", th.c, "Gate shift");
  s_th->add_option("--samples", th.samples, "Monte-Carlo samples");
  s_th->add_option("--seed", th.seed, "Monte-Carlo seed");
  s_th->add_option("--workers", th.workers, "Worker threads");
  s_th->add_option("-o,--out", th.out, "Output CSV (stdout when omitted)");

  BenchArgs be;
  CLI::App *s_be = app.add_subcommand(
      "bench", "Measure the host compute model (c0, c1) for a model");
  s_be->add_option("--model", be.model, "Compressed model path")->required();
  s_be->add_option("--tokens", be.tokens, "Tokens to time");
  s_be->add_option("--seed", be.seed, "Token stream seed");
  s_be->add_option("-o,--out", be.out, "Output CSV (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }

  try {
    if (s_gen->parsed()) cmd_gen_model(gen);
    if (s_cal->parsed()) cmd_calibrate(cal);
    if (s_comp->parsed()) cmd_compress(comp);
    if (s_run->parsed()) cmd_run(run);
    if (s_sim->parsed()) cmd_simulate(sim);
    if (s_pe->parsed()) cmd_predict_eval(pe);
    if (s_th->parsed()) cmd_theory(th);
    if (s_be->parsed()) cmd_bench(be);
    return 0;
  } catch (const UsageError &e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace floe
