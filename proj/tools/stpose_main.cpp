// stpose: synth | convert | train | eval | predict | gradcheck | bench
//
// Exit codes: 0 success, 1 contract violation (bad flags, bad data, failed
// checks), 2 file or stream problem.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "stpose/eval.hpp"
#include "stpose/gradcheck.hpp"
#include "stpose/hpd1.hpp"
#include "stpose/kernels.hpp"
#include "stpose/models.hpp"
#include "stpose/preprocess.hpp"
#include "stpose/synth.hpp"
#include "stpose/textio.hpp"
#include "stpose/training.hpp"

namespace {

using namespace stpose;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("read failed on " + path);
  return ss.str();
}

void apply_threads(int threads) {
  if (threads <= 0) return;  // keep build default
  kernels::set_parallel(threads > 1);
#ifdef _OPENMP
  if (threads > 1) omp_set_num_threads(threads);
#endif
}

// ---- synth ----

SynthConfig synth_config_from_file(const std::string& path) {
  SynthConfig cfg;
  for (const auto& [k, v] : read_kv_file(path)) {
    if (k == "size") cfg.size = static_cast<int>(parse_ll(v, "synth.size"));
    else if (k == "joints") cfg.joints = static_cast<int>(parse_ll(v, "synth.joints"));
    else if (k == "layers") cfg.layers = static_cast<int>(parse_ll(v, "synth.layers"));
    else if (k == "seq_len") cfg.seq_len = static_cast<int>(parse_ll(v, "synth.seq_len"));
    else if (k == "sequences") cfg.n_sequences = static_cast<int>(parse_ll(v, "synth.sequences"));
    else if (k == "smoothness") cfg.smoothness = parse_double(v, "synth.smoothness");
    else if (k == "cube_mm") cfg.cube_mm = parse_double(v, "synth.cube_mm");
    else if (k == "seed") cfg.seed = static_cast<std::uint64_t>(parse_ll(v, "synth.seed"));
    else throw ContractError("unknown synth config key: " + k);
  }
  return cfg;
}

struct SynthArgs {
  std::string out, config;
  SynthConfig flags;  // CLI-supplied values, applied over the file
  CLI::App* cmd = nullptr;
};

void run_synth(const SynthArgs& a) {
  SynthConfig cfg;
  if (!a.config.empty()) cfg = synth_config_from_file(a.config);
  if (a.cmd->count("--size")) cfg.size = a.flags.size;
  if (a.cmd->count("--joints")) cfg.joints = a.flags.joints;
  if (a.cmd->count("--layers")) cfg.layers = a.flags.layers;
  if (a.cmd->count("--seq-len")) cfg.seq_len = a.flags.seq_len;
  if (a.cmd->count("--sequences")) cfg.n_sequences = a.flags.n_sequences;
  if (a.cmd->count("--smoothness")) cfg.smoothness = a.flags.smoothness;
  if (a.cmd->count("--cube-mm")) cfg.cube_mm = a.flags.cube_mm;
  if (a.cmd->count("--seed")) cfg.seed = a.flags.seed;

  const Hpd1Dataset ds = generate_dataset(cfg);
  save_hpd1(a.out, ds);
  std::cout << "wrote " << ds.frames.size() << " frames (" << cfg.n_sequences << " sequences of "
            << cfg.seq_len << ") to " << a.out << "\n";
}

// ---- convert ----

struct ConvertArgs {
  std::string dir, out;
  int seq_len = 16;
  int size = 64;
  int layers = 8;
  double cube_mm = 300.0;
  double mm_per_px = 300.0 / 64;
  double depth_scale = 1.0;
};

void run_convert(const ConvertArgs& a) {
  if (a.seq_len < 1) throw ContractError("convert: --seq-len must be positive");
  namespace fs = std::filesystem;
  std::vector<std::string> stems;
  {
    std::error_code ec;
    fs::directory_iterator it(a.dir, ec);
    if (ec) throw IoError("cannot read directory " + a.dir + ": " + ec.message());
    for (const auto& entry : it)
      if (entry.path().extension() == ".pgm") stems.push_back(entry.path().stem().string());
  }
  if (stems.empty()) throw ContractError("convert: no .pgm files in " + a.dir);
  std::sort(stems.begin(), stems.end());

  Hpd1Dataset ds;
  ds.size = a.size;
  ds.layers = a.layers;
  ds.seq_len = a.seq_len;
  long clamped = 0;
  for (std::size_t i = 0; i < stems.size(); ++i) {
    const std::string base = a.dir + "/" + stems[i];
    const RawDepthFrame raw = read_pgm16(base + ".pgm", a.depth_scale);
    const DepthFrame frame = crop_hand(raw, a.cube_mm, a.mm_per_px, a.size);

    // joint file: 3K numbers per frame; per joint column px, row px, depth mm
    const auto rows = read_pose_lines(base + ".txt", 0);
    std::vector<double> uvd;
    for (const auto& r : rows) uvd.insert(uvd.end(), r.begin(), r.end());
    if (uvd.empty() || uvd.size() % 3 != 0)
      throw ContractError(base + ".txt: expected 3 values per joint, got " +
                          std::to_string(uvd.size()) + " values");
    const int joints = static_cast<int>(uvd.size() / 3);
    if (ds.joints == 0) ds.joints = joints;
    else if (joints != ds.joints)
      throw ContractError(base + ".txt: " + std::to_string(joints) + " joints, expected " +
                          std::to_string(ds.joints));

    HandPose pose;
    pose.joints = joints;
    pose.xyz.resize(uvd.size());
    for (int k = 0; k < joints; ++k) {
      pose.xyz[3 * k + 0] = (uvd[3 * k + 0] - frame.box.cx) * a.mm_per_px;
      pose.xyz[3 * k + 1] = (uvd[3 * k + 1] - frame.box.cy) * a.mm_per_px;
      pose.xyz[3 * k + 2] = uvd[3 * k + 2] - frame.d_center;
    }
    const NormalizedPose npose = normalize_pose(pose, frame);
    clamped += npose.clamped;

    Hpd1Frame rec;
    rec.depth = frame.values;
    rec.pose.assign(npose.xyz.begin(), npose.xyz.end());
    rec.seq = static_cast<std::uint32_t>(i / a.seq_len);
    rec.idx = static_cast<std::uint32_t>(i % a.seq_len);
    ds.frames.push_back(std::move(rec));
  }
  save_hpd1(a.out, ds);
  const std::size_t t = static_cast<std::size_t>(a.seq_len);
  const std::size_t n_seq = (stems.size() + t - 1) / t;
  std::cout << "converted " << stems.size() << " frames into " << n_seq << " sequences, wrote "
            << a.out << "\n";
  if (clamped > 0)
    std::cerr << "warning: " << clamped << " joints fell outside the crop cube and were clamped\n";
}

// ---- train ----

struct TrainArgs {
  std::string stage, data, out, config, arch, log;
  std::string spatial_ckpt, temporal_ckpt;  // fusion stage inputs
  TrainConfig flags;
  int iters = 0;  // budget for the chosen stage
  CLI::App* cmd = nullptr;
};

void report_train(const std::string& stage, const TrainLog& log) {
  double final_loss = 0, val_error = -1;
  long iters = 0;
  for (const auto& r : log.rows) {
    if (r.stage == stage) {
      final_loss = r.loss;
      ++iters;
    } else {
      val_error = r.loss;
    }
  }
  std::cout << "stage " << stage << ": " << iters << " iterations in " << log.wall_seconds
            << " s, final batch loss " << final_loss << "\n";
  if (val_error >= 0) std::cout << "validation error: " << val_error << " mm\n";
  if (log.short_sequences_skipped > 0)
    std::cerr << "warning: skipped " << log.short_sequences_skipped
              << " leftover frames shorter than T\n";
}

void run_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = TrainConfig::from_file(a.config);
  if (a.cmd->count("--seed")) cfg.seed = a.flags.seed;
  if (a.cmd->count("--iters")) {
    if (a.stage == "spatial") cfg.iters_stage_spatial = a.iters;
    else if (a.stage == "temporal") cfg.iters_stage_temporal = a.iters;
    else cfg.iters_stage_fusion = a.iters;
  }
  if (a.cmd->count("--batch")) cfg.batch_size = a.flags.batch_size;
  if (a.cmd->count("--lr")) cfg.lr = a.flags.lr;
  if (a.cmd->count("--seq-len")) cfg.seq_len = a.flags.seq_len;
  if (a.cmd->count("--cube-mm")) cfg.cube_mm = a.flags.cube_mm;
  if (a.cmd->count("--augment") || a.cmd->count("--no-augment")) cfg.augment = a.flags.augment;
  cfg.validate();

  ArchConfig arch_base;
  const ArchConfig* archp = nullptr;
  if (!a.arch.empty()) {
    arch_base = ArchConfig::from_text(slurp(a.arch));
    archp = &arch_base;
  }

  const Hpd1Dataset data = load_hpd1(a.data);
  TrainLog log;
  if (a.stage == "spatial") {
    SpatialTrainResult r = train_spatial(data, cfg, archp);
    r.net.save(a.out);
    log = std::move(r.log);
  } else if (a.stage == "temporal") {
    TemporalTrainResult r = train_temporal(data, cfg, archp);
    r.net.save(a.out);
    log = std::move(r.log);
  } else if (a.stage == "fusion") {
    if (a.spatial_ckpt.empty() || a.temporal_ckpt.empty())
      throw ContractError("train --stage fusion needs --spatial and --temporal checkpoints");
    SpatialNet<float> spatial = SpatialNet<float>::load(a.spatial_ckpt);
    TemporalNet<float> temporal = TemporalNet<float>::load(a.temporal_ckpt);
    FusionTrainResult r = train_fusion(data, cfg, spatial, temporal, archp);
    r.net.save(a.out);
    log = std::move(r.log);
  } else {
    throw ContractError("unknown training stage: " + a.stage);
  }
  if (!a.log.empty()) write_train_log_csv(a.log, log);
  report_train(a.stage, log);
}

// ---- predict ----

struct PredictArgs {
  std::string spatial, temporal, fusion, data;
  std::string out, spatial_out, temporal_out, truth_out;
  double cube_mm = 300.0;
};

std::vector<std::vector<double>> denorm_rows(const std::vector<std::vector<float>>& rows,
                                             double cube_mm) {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    const std::vector<double> norm(r.begin(), r.end());
    out.push_back(denormalize_pose(norm, cube_mm, {0.0, 0.0, 0.0}).xyz);
  }
  return out;
}

void run_predict(const PredictArgs& a) {
  SpatialNet<float> spatial = SpatialNet<float>::load(a.spatial);
  TemporalNet<float> temporal = TemporalNet<float>::load(a.temporal);
  FusionNet<float> fusion = FusionNet<float>::load(a.fusion);
  const Hpd1Dataset data = load_hpd1(a.data);

  const std::vector<std::vector<float>> j_spa = predict_spatial(spatial, data);
  const std::vector<std::vector<float>> j_temp = predict_temporal(temporal, data);
  const std::vector<std::vector<float>> fused = predict_fused(fusion, j_temp, j_spa);

  write_pose_lines(a.out, denorm_rows(fused, a.cube_mm));
  if (!a.spatial_out.empty()) write_pose_lines(a.spatial_out, denorm_rows(j_spa, a.cube_mm));
  if (!a.temporal_out.empty()) write_pose_lines(a.temporal_out, denorm_rows(j_temp, a.cube_mm));
  if (!a.truth_out.empty()) {
    std::vector<std::vector<float>> truth;
    truth.reserve(data.frames.size());
    for (const auto& f : data.frames) truth.push_back(f.pose);
    write_pose_lines(a.truth_out, denorm_rows(truth, a.cube_mm));
  }
  std::cout << "predicted " << fused.size() << " frames, wrote " << a.out << "\n";
}

// ---- eval ----

struct EvalArgs {
  std::string pred, truth, out, curve, svg;
  std::string pred_temporal, pred_spatial, sweep;
};

PredictionSet load_prediction_set(const std::string& pred_path, const std::string& truth_path) {
  PredictionSet set;
  set.pred = read_pose_lines(pred_path, 0);
  if (set.pred.empty()) throw ContractError(pred_path + ": no prediction rows");
  const std::size_t dim = set.pred[0].size();
  if (dim == 0 || dim % 3 != 0)
    throw ContractError(pred_path + ": row width " + std::to_string(dim) +
                        " is not 3 values per joint");
  set.truth = read_pose_lines(truth_path, dim);
  set.joints = static_cast<int>(dim / 3);
  set.validate();
  return set;
}

void run_eval(const EvalArgs& a) {
  const PredictionSet set = load_prediction_set(a.pred, a.truth);
  const MetricsReport report = compute_metrics(set, default_thresholds());
  if (!a.out.empty()) write_report_csv(a.out, report);
  if (!a.curve.empty()) write_curve_csv(a.curve, report);
  if (!a.svg.empty()) write_curve_svg(a.svg, report);
  std::cout << "frames: " << set.pred.size() << "\n";
  for (std::size_t k = 0; k < report.per_joint.size(); ++k)
    std::cout << "joint " << k << " error: " << report.per_joint[k] << " mm\n";
  std::cout << "average error: " << report.average << " mm\n";

  if (!a.sweep.empty()) {
    const PredictionSet t = load_prediction_set(a.pred_temporal, a.truth);
    const PredictionSet s = load_prediction_set(a.pred_spatial, a.truth);
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
    const auto rows = fixed_weight_fusion_sweep(t, s, grid);
    write_sweep_csv(a.sweep, rows);
    const auto best = *std::min_element(rows.begin(), rows.end(),
                                        [](const SweepRow& x, const SweepRow& y) {
                                          return x.avg_error < y.avg_error;
                                        });
    std::cout << "best fixed weight: w=" << best.w << " at " << best.avg_error << " mm\n";
  }
}

// ---- gradcheck ----

struct GradcheckArgs {
  GradcheckOptions opt;
};

int run_gradcheck(const GradcheckArgs& a) {
  const auto results = check_all(a.opt);
  for (const auto& r : results) {
    std::printf("%s %-20s worst %.3e  checked %ld  skipped %ld\n", r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.worst_rel_err, r.checked, r.skipped);
    if (!r.pass) std::printf("     %s\n", r.detail.c_str());
  }
  const bool ok = all_passed(results);
  std::printf("%zu checks, %s\n", results.size(), ok ? "all passed" : "FAILURES above");
  return ok ? 0 : 1;
}

// ---- bench ----

struct BenchArgs {
  std::string spatial, temporal, fusion, data;
  int passes = 5;
};

void run_bench(const BenchArgs& a) {
  if (a.passes < 1) throw ContractError("bench: --passes must be positive");
  SpatialNet<float> spatial = SpatialNet<float>::load(a.spatial);
  TemporalNet<float> temporal = TemporalNet<float>::load(a.temporal);
  FusionNet<float> fusion = FusionNet<float>::load(a.fusion);
  const Hpd1Dataset data = load_hpd1(a.data);
  const std::size_t frames = data.frames.size();

  auto one_pass = [&]() {
    const auto j_spa = predict_spatial(spatial, data);
    const auto j_temp = predict_temporal(temporal, data);
    return predict_fused(fusion, j_temp, j_spa);
  };
  auto timed_fps = [&](std::vector<std::vector<float>>* keep) {
    std::vector<double> fps;
    for (int p = 0; p < a.passes; ++p) {
      const auto t0 = std::chrono::steady_clock::now();
      auto preds = one_pass();
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      fps.push_back(frames / std::max(dt.count(), 1e-9));
      if (keep && p == 0) *keep = std::move(preds);
    }
    std::sort(fps.begin(), fps.end());
    return fps[fps.size() / 2];
  };

  const bool was_parallel = kernels::parallel_enabled();
  std::vector<std::vector<float>> serial_preds, parallel_preds;
  kernels::set_parallel(false);
  const double fps_serial = timed_fps(&serial_preds);
  kernels::set_parallel(true);
  const double fps_parallel = timed_fps(&parallel_preds);
  kernels::set_parallel(was_parallel);

  std::cout << "frames: " << frames << "\n";
  std::cout << "passes: " << a.passes << " (median reported)\n";
  std::cout << "single-threaded: " << fps_serial << " fps\n";
  std::cout << "multi-threaded (" << kernels::max_threads() << " threads): " << fps_parallel << " fps\n";
  std::cout << "predictions: " << (serial_preds == parallel_preds ? "identical" : "DIFFER")
            << "\n";
  if (serial_preds != parallel_preds)
    throw ContractError("bench: threaded inference changed the predictions");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hand pose estimation from depth sequences: slice, fuse, track"};
  app.set_version_flag("--version", "stpose 1.0.0");
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads for kernels (1 forces serial)");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic HPD1 dataset");
  synth->add_option("--out", synth_args.out, "output .hpd1 path")->required();
  synth->add_option("--config", synth_args.config, "key=value config file");
  synth->add_option("--size", synth_args.flags.size, "crop resolution M");
  synth->add_option("--joints", synth_args.flags.joints, "joint count K");
  synth->add_option("--layers", synth_args.flags.layers, "volume slices L");
  synth->add_option("--seq-len", synth_args.flags.seq_len, "frames per sequence T");
  synth->add_option("--sequences", synth_args.flags.n_sequences, "number of sequences");
  synth->add_option("--smoothness", synth_args.flags.smoothness,
                    "max per-frame joint step, fraction of cube");
  synth->add_option("--cube-mm", synth_args.flags.cube_mm, "crop cube side in mm");
  synth->add_option("--seed", synth_args.flags.seed, "generator seed");
  synth_args.cmd = synth;

  ConvertArgs convert_args;
  CLI::App* convert = app.add_subcommand(
      "convert", "pack a directory of <stem>.pgm depth frames (16-bit, 0 = invalid) and "
                 "<stem>.txt joints (3 per joint: column px, row px, depth mm) into HPD1");
  convert->add_option("--dir", convert_args.dir, "input directory")->required();
  convert->add_option("--out", convert_args.out, "output .hpd1 path")->required();
  convert->add_option("--seq-len", convert_args.seq_len, "frames per sequence (default 16)");
  convert->add_option("--size", convert_args.size, "crop resolution M (default 64)");
  convert->add_option("--layers", convert_args.layers, "volume slices L (default 8)");
  convert->add_option("--cube-mm", convert_args.cube_mm, "crop cube side in mm (default 300)");
  convert->add_option("--mm-per-px", convert_args.mm_per_px,
                      "source lateral resolution, mm per pixel (default 300/64)");
  convert->add_option("--depth-scale", convert_args.depth_scale,
                      "mm per PGM count (default 1)");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train one pipeline stage");
  train->add_option("--stage", train_args.stage, "spatial | temporal | fusion")
      ->required()
      ->check(CLI::IsMember({"spatial", "temporal", "fusion"}));
  train->add_option("--data", train_args.data, "training .hpd1")->required();
  train->add_option("--out", train_args.out, "output checkpoint path")->required();
  train->add_option("--config", train_args.config, "key=value training config file");
  train->add_option("--arch", train_args.arch, "key=value architecture overrides");
  train->add_option("--log", train_args.log, "write per-iteration CSV log here");
  train->add_option("--spatial", train_args.spatial_ckpt, "spatial checkpoint (fusion stage)");
  train->add_option("--temporal", train_args.temporal_ckpt, "temporal checkpoint (fusion stage)");
  train->add_option("--seed", train_args.flags.seed, "training seed");
  train->add_option("--batch", train_args.flags.batch_size, "batch size");
  train->add_option("--lr", train_args.flags.lr, "initial learning rate");
  train->add_option("--seq-len", train_args.flags.seq_len, "sequence chunk length T");
  train->add_option("--cube-mm", train_args.flags.cube_mm, "cube side for logged val errors");
  train->add_option("--iters", train_args.iters, "iteration budget for the chosen stage");
  train->add_flag("--augment,!--no-augment", train_args.flags.augment,
                  "augmented copies on/off (default on)");
  train_args.cmd = train;

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand("predict", "run the fused pipeline over a dataset");
  predict->add_option("--spatial", predict_args.spatial, "spatial checkpoint")->required();
  predict->add_option("--temporal", predict_args.temporal, "temporal checkpoint")->required();
  predict->add_option("--fusion", predict_args.fusion, "fusion checkpoint")->required();
  predict->add_option("--data", predict_args.data, "input .hpd1")->required();
  predict->add_option("--out", predict_args.out, "fused predictions, mm text")->required();
  predict->add_option("--spatial-out", predict_args.spatial_out, "also write per-frame predictions");
  predict->add_option("--temporal-out", predict_args.temporal_out, "also write sequence predictions");
  predict->add_option("--truth-out", predict_args.truth_out, "also write ground truth, mm text");
  predict->add_option("--cube-mm", predict_args.cube_mm, "cube side for denormalization");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--pred", eval_args.pred, "prediction file, mm text")->required();
  eval->add_option("--truth", eval_args.truth, "ground truth file, mm text")->required();
  eval->add_option("--out", eval_args.out, "per-joint report CSV");
  eval->add_option("--curve", eval_args.curve, "accuracy curve CSV");
  eval->add_option("--svg", eval_args.svg, "accuracy curve SVG");
  auto* sweep_opt = eval->add_option("--sweep", eval_args.sweep, "fixed-weight sweep CSV");
  eval->add_option("--pred-temporal", eval_args.pred_temporal, "temporal predictions for --sweep")
      ->needs(sweep_opt);
  eval->add_option("--pred-spatial", eval_args.pred_spatial, "spatial predictions for --sweep")
      ->needs(sweep_opt);
  sweep_opt->needs(eval->get_option("--pred-temporal"));
  sweep_opt->needs(eval->get_option("--pred-spatial"));

  GradcheckArgs gradcheck_args;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gradcheck->add_option("--seeds", gradcheck_args.opt.seeds, "random seeds per check");
  gradcheck->add_option("--max-coords", gradcheck_args.opt.max_coords,
                        "sampled coordinates per check per seed");
  gradcheck->add_option("--fd-step", gradcheck_args.opt.fd_step, "central difference step");
  gradcheck->add_option("--perturb", gradcheck_args.opt.perturb_check,
                        "fault injection: corrupt this check's analytic gradients");

  BenchArgs bench_args;
  CLI::App* bench = app.add_subcommand("bench", "inference throughput, serial vs threaded");
  bench->add_option("--spatial", bench_args.spatial, "spatial checkpoint")->required();
  bench->add_option("--temporal", bench_args.temporal, "temporal checkpoint")->required();
  bench->add_option("--fusion", bench_args.fusion, "fusion checkpoint")->required();
  bench->add_option("--data", bench_args.data, "input .hpd1")->required();
  bench->add_option("--passes", bench_args.passes, "timed passes (default 5)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << "\n";
    return 1;
  }

  try {
    apply_threads(threads);
    if (synth->parsed()) run_synth(synth_args);
    else if (convert->parsed()) run_convert(convert_args);
    else if (train->parsed()) run_train(train_args);
    else if (predict->parsed()) run_predict(predict_args);
    else if (eval->parsed()) run_eval(eval_args);
    else if (gradcheck->parsed()) return run_gradcheck(gradcheck_args);
    else if (bench->parsed()) run_bench(bench_args);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
