// Acceptance suite: eight end-to-end criteria, one verdict line each.
// Each criterion prints exactly one PASS/FAIL line; the exit status is the
// number of failures, so ctest goes red if any criterion regresses.
//
// Tolerances and budgets are pinned here on purpose. The heavier criteria
// (staged overfit, temporal benefit) train real models and take minutes on a
// single desktop core; their schedules were tuned once and then frozen.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stpose/eval.hpp"
#include "stpose/gradcheck.hpp"
#include "stpose/hpd1.hpp"
#include "stpose/models.hpp"
#include "stpose/preprocess.hpp"
#include "stpose/rng.hpp"
#include "stpose/synth.hpp"
#include "stpose/tensor.hpp"
#include "stpose/textio.hpp"
#include "stpose/training.hpp"

using namespace stpose;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string note;
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "stpose_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// CLI invocations route stdout/stderr into a scratch log so the verdict lines
// stay the only thing this binary prints.
int run_cli(const std::string& args) {
  static int n = 0;
  const fs::path log = scratch_dir() / ("cli_" + std::to_string(n++) + ".log");
  const std::string cmd =
      std::string(STPOSE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : (rc >> 8) & 0xff;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---- criterion 1: gradient suite -------------------------------------------

Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckOptions opt;  // 10 seeds, 32 coords, 1e-4 per op, 1e-3 per network
  const auto results = check_all(opt);
  const double secs = seconds_since(t0);

  long checked = 0;
  for (const auto& r : results) checked += r.checked;
  const bool clean = all_passed(results) && !results.empty();

  // the checker has to notice a corrupted gradient, or a clean run means nothing
  GradcheckOptions bad = opt;
  bad.seeds = 2;
  bad.max_coords = 8;
  bad.perturb_check = "op.fully_connected";
  const bool flagged = !all_passed(check_ops(bad));

  Verdict v;
  v.pass = clean && flagged && secs < 60.0;
  v.note = std::to_string(results.size()) + " checks, " + std::to_string(checked) +
           " coordinates in " + fmt(secs, 1) + " s (budget 60), injected fault " +
           (flagged ? "flagged" : "MISSED");
  return v;
}

// ---- criterion 2: slicing invariants ---------------------------------------

Verdict slicing_invariants() {
  Rng rng(20260822);
  long fg_total = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = static_cast<int>(rng.uniform_int(6, 28));
    const int layers = static_cast<int>(rng.uniform_int(1, 8));
    DepthFrame f;
    f.size = m;
    f.values.resize(static_cast<std::size_t>(m) * m);
    for (auto& px : f.values)
      px = rng.uniform() < 0.35 ? 1.0f : static_cast<float>(rng.uniform(-1.0, 0.999));
    // plant a guaranteed spread so the min/max boundary checks never degenerate
    f.values[0] = static_cast<float>(rng.uniform(-1.0, -0.5));
    f.values[1] = static_cast<float>(rng.uniform(0.5, 0.999));

    float vmin = 2.0f, vmax = -2.0f;
    for (float px : f.values)
      if (px < 1.0f) {
        vmin = std::min(vmin, px);
        vmax = std::max(vmax, px);
      }

    const SlicedVolume vol = slice_volume(f, layers);
    for (int y = 0; y < m; ++y)
      for (int x = 0; x < m; ++x) {
        int hits = 0;
        int layer = -1;
        for (int l = 0; l < layers; ++l)
          if (vol.at(l, y, x)) {
            ++hits;
            layer = l;
          }
        const float px = f.values[static_cast<std::size_t>(y) * m + x];
        if (px < 1.0f) {
          ++fg_total;
          if (hits != 1)
            return {false, "foreground pixel in " + std::to_string(hits) + " layers"};
          if (px == vmin && layer != 0)
            return {false, "nearest depth landed in layer " + std::to_string(layer)};
          if (px == vmax && layer != layers - 1)
            return {false, "farthest depth landed in layer " + std::to_string(layer) +
                               " of " + std::to_string(layers)};
        } else if (hits != 0) {
          return {false, "background pixel occupies a layer"};
        }
      }
  }
  return {true, "1000 random frames, " + std::to_string(fg_total) +
                    " foreground pixels each in exactly one layer, extremes exact"};
}

// ---- criterion 3: metric oracles -------------------------------------------

Verdict metric_oracles() {
  Rng rng(833271);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    PredictionSet set;
    const int n = static_cast<int>(rng.uniform_int(1, 20));
    set.joints = static_cast<int>(rng.uniform_int(1, 10));
    for (int i = 0; i < n; ++i) {
      std::vector<double> p(3 * set.joints), t(3 * set.joints);
      for (auto& v : p) v = rng.uniform(-400.0, 400.0);
      for (auto& v : t) v = rng.uniform(-400.0, 400.0);
      set.pred.push_back(p);
      set.truth.push_back(t);
    }

    // brute-force scalar transcription of the three metrics
    std::vector<double> oracle_joint(set.joints, 0.0);
    for (int k = 0; k < set.joints; ++k) {
      double sum = 0;
      for (int i = 0; i < n; ++i) {
        const double dx = set.pred[i][3 * k] - set.truth[i][3 * k];
        const double dy = set.pred[i][3 * k + 1] - set.truth[i][3 * k + 1];
        const double dz = set.pred[i][3 * k + 2] - set.truth[i][3 * k + 2];
        sum += std::sqrt(dx * dx + dy * dy + dz * dz);
      }
      oracle_joint[k] = sum / n;
    }
    double oracle_avg = 0;
    for (double e : oracle_joint) oracle_avg += e;
    oracle_avg /= set.joints;

    const auto thresholds = default_thresholds();
    std::vector<double> oracle_frac(thresholds.size(), 0.0);
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      int good = 0;
      for (int i = 0; i < n; ++i) {
        double worst_joint = 0;
        for (int k = 0; k < set.joints; ++k) {
          const double dx = set.pred[i][3 * k] - set.truth[i][3 * k];
          const double dy = set.pred[i][3 * k + 1] - set.truth[i][3 * k + 1];
          const double dz = set.pred[i][3 * k + 2] - set.truth[i][3 * k + 2];
          worst_joint = std::max(worst_joint, std::sqrt(dx * dx + dy * dy + dz * dz));
        }
        if (worst_joint <= thresholds[ti]) ++good;
      }
      oracle_frac[ti] = static_cast<double>(good) / n;
    }

    const auto got_joint = per_joint_error(set);
    const double got_avg = average_error(set);
    const auto got_frac = accuracy_curve(set, thresholds);
    for (int k = 0; k < set.joints; ++k)
      worst = std::max(worst, std::fabs(got_joint[k] - oracle_joint[k]));
    worst = std::max(worst, std::fabs(got_avg - oracle_avg));
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti)
      worst = std::max(worst, std::fabs(got_frac[ti] - oracle_frac[ti]));
  }
  Verdict v;
  v.pass = worst <= 1e-12;
  v.note = "100 random sets, worst oracle deviation " + fmt(worst * 1e12, 3) + "e-12 (bound 1e-12)";
  return v;
}

// ---- criterion 4: fusion contract ------------------------------------------

ArchConfig tiny_arch() {
  ArchConfig a;
  a.size = 16;
  a.joints = 2;
  a.layers = 4;
  a.seq_len = 4;
  a.conv1_out = 4;
  a.conv2_out = 8;
  a.fc_dim = 32;
  a.lstm_dim = 16;
  a.fusion_hidden = 8;
  a.dropout = 0.0;
  return a;
}

Verdict fusion_contract() {
  const ArchConfig arch = tiny_arch();

  // convexity on random nets and inputs
  Rng rng(4242);
  for (int trial = 0; trial < 20; ++trial) {
    FusionNet<float> net(arch, 100 + trial);
    Tape<float> tape;
    Tensor<float> jt = tape.leaf({static_cast<std::size_t>(arch.out_dim())});
    Tensor<float> js = tape.leaf({static_cast<std::size_t>(arch.out_dim())});
    for (auto& v : jt.mutable_value()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (auto& v : js.mutable_value()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const auto out = net.forward(tape, jt, js);
    for (int i = 0; i < arch.out_dim(); ++i) {
      const float w1 = out.w1.value()[i];
      const float w2 = out.w2.value()[i];
      if (!(w1 >= 0.0f && w1 <= 1.0f)) return {false, "w1 outside [0, 1]"};
      if (w1 + w2 != 1.0f)
        return {false, "w1 + w2 != 1 exactly at component " + std::to_string(i)};
      const float lo = std::min(jt.value()[i], js.value()[i]) - 1e-6f;
      const float hi = std::max(jt.value()[i], js.value()[i]) + 1e-6f;
      if (out.out.value()[i] < lo || out.out.value()[i] > hi)
        return {false, "fused output escapes the prediction interval"};
    }
  }

  // saturated confidence through the command-line predict path: w1 pinned to
  // 1 (or 0) must reproduce the temporal (or spatial) output file bytes
  const fs::path dir = scratch_dir() / "fusion_contract";
  fs::create_directories(dir);
  const fs::path data = dir / "data.hpd1";
  if (run_cli("synth --out " + data.string() +
              " --size 16 --joints 2 --layers 4 --seq-len 4 --sequences 3 --seed 5") != 0)
    return {false, "synth failed"};

  SpatialNet<float> spatial(arch, 11);
  TemporalNet<float> temporal(arch, 12);
  const fs::path sp = dir / "sp.ckpt", tm = dir / "tm.ckpt";
  spatial.save(sp.string());
  temporal.save(tm.string());

  const auto saturated = [&](float bias, const fs::path& path) {
    FusionNet<float> fus(arch, 13);
    Param<float>* w = fus.params().find("fc2.w");
    Param<float>* b = fus.params().find("fc2.b");
    std::fill(w->value.begin(), w->value.end(), 0.0f);
    std::fill(b->value.begin(), b->value.end(), bias);
    fus.save(path.string());
  };
  const fs::path fus_t = dir / "fus_t.ckpt", fus_s = dir / "fus_s.ckpt";
  saturated(104.0f, fus_t);   // sigmoid saturates to exactly 1: all temporal
  saturated(-104.0f, fus_s);  // exactly 0: all spatial

  const std::string common = " --spatial " + sp.string() + " --temporal " + tm.string() +
                             " --data " + data.string();
  const fs::path out_t = dir / "fused_t.txt", out_s = dir / "fused_s.txt";
  const fs::path only_t = dir / "temporal.txt", only_s = dir / "spatial.txt";
  if (run_cli("predict" + common + " --fusion " + fus_t.string() + " --out " + out_t.string() +
              " --temporal-out " + only_t.string() + " --spatial-out " + only_s.string()) != 0)
    return {false, "predict with temporal-saturated fusion failed"};
  if (run_cli("predict" + common + " --fusion " + fus_s.string() + " --out " + out_s.string()) != 0)
    return {false, "predict with spatial-saturated fusion failed"};

  const std::string bytes_t = file_bytes(out_t), bytes_s = file_bytes(out_s);
  if (bytes_t.empty() || bytes_s.empty()) return {false, "predict wrote empty files"};
  if (bytes_t == bytes_s) return {false, "saturated runs agree, comparison is vacuous"};
  if (bytes_t != file_bytes(only_t)) return {false, "w1=1 output differs from temporal bytes"};
  if (bytes_s != file_bytes(only_s)) return {false, "w1=0 output differs from spatial bytes"};

  return {true, "w1+w2 exact on 20 random nets, saturated w1 reproduces either branch "
                "byte-for-byte through predict"};
}

// ---- criterion 5: staged overfit -------------------------------------------

// Tuned once for the single-core sandbox: aggressive lr with step decay, no
// augmentation, dropout off, so the pipeline drives the training split well
// under the error bound inside the wall budget.
const char* kOverfitTrainCfg =
    "batch_size=16\n"
    "lr=0.003\n"
    "lr_decay_every=250\n"
    "lr_decay_factor=0.3\n"
    "iters_stage_spatial=800\n"
    "iters_stage_temporal=300\n"
    "iters_stage_fusion=300\n"
    "seed=1\n"
    "T=16\n"
    "augment=false\n"
    "cube_mm=300\n";

Verdict staged_overfit() {
  const fs::path dir = scratch_dir() / "overfit";
  fs::create_directories(dir);
  const fs::path data = dir / "data.hpd1";
  if (run_cli("synth --out " + data.string()) != 0)  // default 256 sequences of 16
    return {false, "synth failed"};

  const fs::path cfg = dir / "train.cfg", arch = dir / "arch.cfg";
  std::ofstream(cfg) << kOverfitTrainCfg;
  std::ofstream(arch) << "dropout=0\n";

  const fs::path sp = dir / "sp.ckpt", tm = dir / "tm.ckpt", fu = dir / "fu.ckpt";
  const auto t0 = std::chrono::steady_clock::now();
  if (run_cli("train --stage spatial --data " + data.string() + " --out " + sp.string() +
              " --config " + cfg.string() + " --arch " + arch.string()) != 0)
    return {false, "spatial stage failed"};
  if (run_cli("train --stage temporal --data " + data.string() + " --out " + tm.string() +
              " --config " + cfg.string() + " --arch " + arch.string() + " --batch 4") != 0)
    return {false, "temporal stage failed"};

  const std::string sp_before = file_bytes(sp), tm_before = file_bytes(tm);
  if (run_cli("train --stage fusion --data " + data.string() + " --out " + fu.string() +
              " --config " + cfg.string() + " --arch " + arch.string() + " --spatial " +
              sp.string() + " --temporal " + tm.string()) != 0)
    return {false, "fusion stage failed"};
  const double train_secs = seconds_since(t0);
  if (file_bytes(sp) != sp_before || file_bytes(tm) != tm_before)
    return {false, "fusion stage modified an upstream checkpoint"};

  const fs::path pred = dir / "pred.txt", pred_t = dir / "pred_temporal.txt";
  const fs::path pred_s = dir / "pred_spatial.txt", truth = dir / "truth.txt";
  if (run_cli("predict --spatial " + sp.string() + " --temporal " + tm.string() + " --fusion " +
              fu.string() + " --data " + data.string() + " --out " + pred.string() +
              " --temporal-out " + pred_t.string() + " --spatial-out " + pred_s.string() +
              " --truth-out " + truth.string()) != 0)
    return {false, "predict failed"};

  // training-set error: the rows belonging to the training split, which is
  // every sequence before the held-out tail
  const Hpd1Dataset ds = load_hpd1(data.string());
  const auto [train_ids, val_ids] = split_sequences(ds);
  std::size_t val_rows = 0;
  for (const auto& f : ds.frames)
    if (std::find(val_ids.begin(), val_ids.end(), f.seq) != val_ids.end()) ++val_rows;

  const auto pred_rows = read_pose_lines(pred.string(), 0);
  const auto truth_rows = read_pose_lines(truth.string(), 0);
  if (pred_rows.size() != ds.frames.size() || truth_rows.size() != ds.frames.size())
    return {false, "prediction row count does not match the dataset"};

  PredictionSet train_set;
  train_set.joints = ds.joints;
  const std::size_t n_train = ds.frames.size() - val_rows;
  for (std::size_t i = 0; i < n_train; ++i) {
    train_set.pred.push_back(pred_rows[i]);
    train_set.truth.push_back(truth_rows[i]);
  }
  train_set.validate();
  const double err = average_error(train_set);

  const double budget = 900.0;  // single desktop core
  Verdict v;
  v.pass = err < 15.0 && train_secs < budget;
  v.note = "three stages in " + fmt(train_secs, 0) + " s (budget " + fmt(budget, 0) +
           "), training-set error " + fmt(err, 2) + " mm (bound 15, cube 300)";
  return v;
}

// ---- criterion 6: temporal benefit -----------------------------------------

Hpd1Dataset shuffle_within_sequences(const Hpd1Dataset& src, std::uint64_t seed) {
  Hpd1Dataset out = src;
  Rng rng(seed);
  for (const auto& [b, e] : out.sequence_ranges()) {
    std::vector<std::uint32_t> order;
    for (std::size_t i = b; i < e; ++i) order.push_back(out.frames[i].idx);
    rng.shuffle(order.begin(), order.end());
    for (std::size_t i = b; i < e; ++i) out.frames[i].idx = order[i - b];
    std::sort(out.frames.begin() + static_cast<std::ptrdiff_t>(b),
              out.frames.begin() + static_cast<std::ptrdiff_t>(e),
              [](const Hpd1Frame& x, const Hpd1Frame& y) { return x.idx < y.idx; });
  }
  out.validate();
  return out;
}

double temporal_val_error_mm(TemporalNet<float>& net, const Hpd1Dataset& val, double cube_mm) {
  const auto rows = predict_temporal(net, val);
  PredictionSet set;
  set.joints = val.joints;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    set.pred.emplace_back(rows[i].begin(), rows[i].end());
    set.truth.emplace_back(val.frames[i].pose.begin(), val.frames[i].pose.end());
    for (auto& v : set.pred.back()) v *= cube_mm / 2.0;
    for (auto& v : set.truth.back()) v *= cube_mm / 2.0;
  }
  set.validate();
  return average_error(set);
}

Verdict temporal_benefit() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t s = 0; s < 3; ++s) {
    SynthConfig sc;
    sc.size = 32;
    sc.joints = 4;
    sc.layers = 4;
    sc.seq_len = 8;
    sc.n_sequences = 20;
    sc.smoothness = 0.05;
    sc.seed = 100 + s;
    const Hpd1Dataset train_data = generate_dataset(sc);
    const Hpd1Dataset shuffled = shuffle_within_sequences(train_data, 77 + s);

    SynthConfig vc = sc;
    vc.n_sequences = 32;
    vc.seed = sc.seed + 1000;
    const Hpd1Dataset val = generate_dataset(vc);

    ArchConfig base;
    base.conv1_out = 4;
    base.conv2_out = 8;
    base.fc_dim = 48;
    base.lstm_dim = 48;
    base.fusion_hidden = 8;
    base.dropout = 0.0;

    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.lr = 0.01;
    cfg.lr_decay_every = 500;
    cfg.lr_decay_factor = 0.3;
    cfg.iters_stage_temporal = 1200;
    cfg.seq_len = 8;
    cfg.seed = 9 + s;

    auto ordered = train_temporal(train_data, cfg, &base);
    auto scrambled = train_temporal(shuffled, cfg, &base);
    const double e_ord = temporal_val_error_mm(ordered.net, val, sc.cube_mm);
    const double e_shuf = temporal_val_error_mm(scrambled.net, val, sc.cube_mm);
    if (e_ord < e_shuf) ++wins;
    if (!detail.empty()) detail += ", ";
    detail += fmt(e_ord, 1) + " vs " + fmt(e_shuf, 1);
  }
  Verdict v;
  v.pass = wins >= 2;
  v.note = "ordered vs shuffled val error (mm): " + detail + "; " + std::to_string(wins) +
           " of 3 seeds favor coherent training (need 2)";
  return v;
}

// ---- criterion 7: learned vs fixed fusion ----------------------------------

PredictionSet to_mm_set(const std::vector<std::vector<float>>& rows, const Hpd1Dataset& d,
                        double cube_mm) {
  PredictionSet s;
  s.joints = d.joints;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.pred.emplace_back(rows[i].begin(), rows[i].end());
    s.truth.emplace_back(d.frames[i].pose.begin(), d.frames[i].pose.end());
    for (auto& v : s.pred.back()) v *= cube_mm / 2.0;
    for (auto& v : s.truth.back()) v *= cube_mm / 2.0;
  }
  s.validate();
  return s;
}

// A regime where neither branch memorizes: enough sequences that train and
// validation quality match, so the fusion net's learned weighting is tested on
// the distribution it trained for. The grid picks its best w on the
// validation set itself, which is an oracle the learned weighting has to tie.
Verdict learned_vs_fixed() {
  SynthConfig sc;
  sc.size = 32;
  sc.joints = 4;
  sc.layers = 4;
  sc.seq_len = 8;
  sc.n_sequences = 200;
  sc.seed = 41;
  const Hpd1Dataset data = generate_dataset(sc);

  ArchConfig base;
  base.conv1_out = 4;
  base.conv2_out = 8;
  base.fc_dim = 48;
  base.lstm_dim = 48;
  base.fusion_hidden = 32;
  base.dropout = 0.3;

  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.lr = 0.003;
  cfg.lr_decay_every = 500;
  cfg.lr_decay_factor = 0.3;
  cfg.iters_stage_spatial = 600;
  cfg.iters_stage_temporal = 1200;
  cfg.iters_stage_fusion = 600;
  cfg.seq_len = 8;
  cfg.seed = 1;

  auto sp = train_spatial(data, cfg, &base);
  TrainConfig tcfg = cfg;
  tcfg.batch_size = 2;  // sequences per batch
  auto tm = train_temporal(data, tcfg, &base);
  auto fu = train_fusion(data, cfg, sp.net, tm.net, &base);

  SynthConfig vc = sc;
  vc.n_sequences = 40;
  vc.seed = sc.seed + 2000;
  const Hpd1Dataset val = generate_dataset(vc);

  const auto rows_s = predict_spatial(sp.net, val);
  const auto rows_t = predict_temporal(tm.net, val);
  const auto rows_f = predict_fused(fu.net, rows_t, rows_s);
  const PredictionSet set_s = to_mm_set(rows_s, val, sc.cube_mm);
  const PredictionSet set_t = to_mm_set(rows_t, val, sc.cube_mm);
  const PredictionSet set_f = to_mm_set(rows_f, val, sc.cube_mm);

  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  const auto sweep = fixed_weight_fusion_sweep(set_t, set_s, grid);
  double best = sweep[0].avg_error;
  for (const auto& r : sweep) best = std::min(best, r.avg_error);

  const double got = average_error(set_f);
  Verdict v;
  v.pass = got <= best * 1.02;
  v.note = "validation error " + fmt(got, 2) + " mm, best fixed weight " + fmt(best, 2) +
           " mm (allowed +2%); branches " + fmt(average_error(set_s), 1) + " / " +
           fmt(average_error(set_t), 1) + " mm";
  return v;
}

// ---- criterion 8: determinism ----------------------------------------------

Verdict determinism() {
  const auto pipeline = [&](const fs::path& dir) -> std::string {
    fs::create_directories(dir);
    const fs::path data = dir / "data.hpd1";
    const fs::path arch = dir / "arch.cfg";
    std::ofstream(arch) << "conv1_out=4\nconv2_out=8\nfc_dim=32\nlstm_dim=16\nfusion_hidden=8\n";
    const fs::path sp = dir / "sp.ckpt", tm = dir / "tm.ckpt", fu = dir / "fu.ckpt";
    if (run_cli("synth --out " + data.string() +
                " --size 16 --joints 2 --layers 4 --seq-len 4 --sequences 4 --seed 77") != 0)
      return "synth failed";
    if (run_cli("train --stage spatial --data " + data.string() + " --out " + sp.string() +
                " --arch " + arch.string() +
                " --iters 8 --batch 8 --lr 0.01 --seq-len 4 --seed 3 --log " +
                (dir / "sp.csv").string()) != 0)
      return "spatial stage failed";
    if (run_cli("train --stage temporal --data " + data.string() + " --out " + tm.string() +
                " --arch " + arch.string() +
                " --iters 6 --batch 2 --lr 0.01 --seq-len 4 --seed 3 --log " +
                (dir / "tm.csv").string()) != 0)
      return "temporal stage failed";
    if (run_cli("train --stage fusion --data " + data.string() + " --out " + fu.string() +
                " --arch " + arch.string() + " --spatial " + sp.string() + " --temporal " +
                tm.string() + " --iters 8 --batch 8 --lr 0.01 --seq-len 4 --seed 3 --log " +
                (dir / "fu.csv").string()) != 0)
      return "fusion stage failed";
    if (run_cli("predict --spatial " + sp.string() + " --temporal " + tm.string() +
                " --fusion " + fu.string() + " --data " + data.string() + " --out " +
                (dir / "pred.txt").string() + " --spatial-out " + (dir / "pred_s.txt").string() +
                " --temporal-out " + (dir / "pred_t.txt").string() + " --truth-out " +
                (dir / "truth.txt").string()) != 0)
      return "predict failed";
    if (run_cli("eval --pred " + (dir / "pred.txt").string() + " --truth " +
                (dir / "truth.txt").string() + " --out " + (dir / "report.csv").string() +
                " --curve " + (dir / "curve.csv").string()) != 0)
      return "eval failed";
    return "";
  };

  const fs::path r1 = scratch_dir() / "determinism_a";
  const fs::path r2 = scratch_dir() / "determinism_b";
  if (const std::string err = pipeline(r1); !err.empty()) return {false, "run 1: " + err};
  if (const std::string err = pipeline(r2); !err.empty()) return {false, "run 2: " + err};

  const char* files[] = {"data.hpd1", "sp.ckpt", "tm.ckpt",  "fu.ckpt",   "sp.csv",
                         "tm.csv",    "fu.csv",  "pred.txt", "pred_s.txt", "pred_t.txt",
                         "truth.txt", "report.csv", "curve.csv"};
  for (const char* f : files) {
    const std::string a = file_bytes(r1 / f);
    if (a.empty()) return {false, std::string(f) + " is empty"};
    if (a != file_bytes(r2 / f)) return {false, std::string(f) + " differs between runs"};
  }
  return {true, "13 artifacts byte-identical across two seeded pipeline runs"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Entry {
    const char* name;
    Verdict (*fn)();
  };
  const Entry table[] = {
      {"gradient-suite", gradient_suite},
      {"slicing-invariants", slicing_invariants},
      {"metric-oracles", metric_oracles},
      {"fusion-contract", fusion_contract},
      {"staged-overfit", staged_overfit},
      {"temporal-benefit", temporal_benefit},
      {"learned-vs-fixed-fusion", learned_vs_fixed},
      {"determinism", determinism},
  };

  // optional name arguments restrict the run, for debugging a single criterion
  const auto selected = [&](const char* name) {
    if (argc < 2) return true;
    for (int i = 1; i < argc; ++i)
      if (std::string(argv[i]) == name) return true;
    return false;
  };

  int failed = 0;
  int idx = 0;
  for (const Entry& e : table) {
    ++idx;
    if (!selected(e.name)) continue;
    Verdict v;
    try {
      v = e.fn();
    } catch (const std::exception& ex) {
      v = {false, std::string("exception: ") + ex.what()};
    }
    if (!v.pass) ++failed;
    std::printf("criterion %d/8 %-24s %s  %s\n", idx, e.name, v.pass ? "PASS" : "FAIL",
                v.note.c_str());
    std::fflush(stdout);
  }
  return failed;
}
