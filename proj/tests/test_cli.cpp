#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stpose/common.hpp"
#include "stpose/hpd1.hpp"
#include "stpose/preprocess.hpp"
#include "stpose/textio.hpp"

using namespace stpose;
namespace fs = std::filesystem;

namespace {

const char* cli() { return STPOSE_CLI_PATH; }

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "stpose_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

RunResult run(const std::string& args) {
  const fs::path so = scratch_dir() / "stdout.txt";
  const fs::path se = scratch_dir() / "stderr.txt";
  const std::string cmd =
      std::string(cli()) + " " + args + " > " + so.string() + " 2> " + se.string();
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = (raw >= 0 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  r.out = slurp(so);
  r.err = slurp(se);
  return r;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// tiny dataset shared by the pipeline tests, generated once
fs::path tiny_dataset() {
  static fs::path path = [] {
    fs::path p = scratch_dir() / "tiny.hpd1";
    RunResult r = run("synth --out " + p.string() +
                      " --size 16 --joints 2 --layers 4 --seq-len 2 --sequences 3 --seed 11");
    REQUIRE(r.code == 0);
    return p;
  }();
  return path;
}

// CLI arch file matching the tiny datasets
fs::path tiny_arch_file() {
  static fs::path path = [] {
    fs::path p = scratch_dir() / "tiny.arch";
    std::ofstream out(p);
    out << "conv1_out=4\nconv2_out=8\nfc_dim=32\nlstm_dim=16\nfusion_hidden=8\ndropout=0\n";
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("--version prints a machine readable version line") {
  RunResult r = run("--version");
  CHECK(r.code == 0);
  CHECK(r.out == "stpose 1.0.0\n");
}

TEST_CASE("usage errors exit with status one and show help") {
  RunResult none = run("");
  CHECK(none.code == 1);

  RunResult unknown = run("definitely-not-a-command");
  CHECK(unknown.code == 1);

  RunResult flag = run("synth --out /tmp/x.hpd1 --bogus");
  CHECK(flag.code == 1);
  CHECK(flag.err.find("--bogus") != std::string::npos);
  CHECK(flag.err.find("Usage") != std::string::npos);

  RunResult missing = run("synth");  // --out is required
  CHECK(missing.code == 1);

  RunResult help = run("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("synth") != std::string::npos);
  CHECK(help.out.find("train") != std::string::npos);
  CHECK(help.out.find("predict") != std::string::npos);
  CHECK(help.out.find("eval") != std::string::npos);
}

TEST_CASE("i/o problems exit with status two") {
  RunResult r = run("train --stage spatial --data /nonexistent/data.hpd1 --out " +
                    (scratch_dir() / "x.ckpt").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("i/o error") != std::string::npos);

  RunResult e = run("eval --pred /nonexistent/p.txt --truth /nonexistent/t.txt");
  CHECK(e.code == 2);
}

TEST_CASE("contract violations exit with status one") {
  const fs::path bad = scratch_dir() / "bad.cfg";
  {
    std::ofstream out(bad);
    out << "no_such_key=5\n";
  }
  RunResult r = run("synth --out " + (scratch_dir() / "never.hpd1").string() + " --config " +
                    bad.string());
  CHECK(r.code == 1);
  CHECK(r.err.find("error") != std::string::npos);

  // corrupt dataset: header magic is wrong
  const fs::path junk = scratch_dir() / "junk.hpd1";
  {
    std::ofstream out(junk, std::ios::binary);
    out << "JUNKJUNKJUNKJUNKJUNKJUNK";
  }
  RunResult t = run("train --stage spatial --data " + junk.string() + " --out " +
                    (scratch_dir() / "x.ckpt").string());
  CHECK(t.code == 2);  // malformed file is an i/o error
}

TEST_CASE("synth writes a loadable dataset and is seed deterministic") {
  const fs::path a = scratch_dir() / "det_a.hpd1";
  const fs::path b = scratch_dir() / "det_b.hpd1";
  REQUIRE(run("synth --out " + a.string() +
              " --size 16 --joints 2 --layers 4 --seq-len 2 --sequences 2 --seed 7")
              .code == 0);
  REQUIRE(run("synth --out " + b.string() +
              " --size 16 --joints 2 --layers 4 --seq-len 2 --sequences 2 --seed 7")
              .code == 0);
  CHECK(file_bytes(a) == file_bytes(b));

  Hpd1Dataset ds = load_hpd1(a.string());
  CHECK(ds.size == 16);
  CHECK(ds.joints == 2);
  CHECK(ds.layers == 4);
  CHECK(ds.frames.size() == 4);

  // config file plus CLI override: the flag wins
  const fs::path cfg = scratch_dir() / "synth.cfg";
  {
    std::ofstream out(cfg);
    out << "size=16\njoints=2\nlayers=4\nseq_len=2\nsequences=5\nseed=7\n";
  }
  const fs::path c = scratch_dir() / "det_c.hpd1";
  REQUIRE(run("synth --out " + c.string() + " --config " + cfg.string() + " --sequences 2").code ==
          0);
  CHECK(file_bytes(c) == file_bytes(a));
}

TEST_CASE("the staged pipeline trains, predicts and evaluates end to end") {
  const fs::path data = tiny_dataset();
  const fs::path arch = tiny_arch_file();
  const fs::path spat = scratch_dir() / "spatial.ckpt";
  const fs::path temp = scratch_dir() / "temporal.ckpt";
  const fs::path fuse = scratch_dir() / "fusion.ckpt";
  const fs::path log = scratch_dir() / "train.csv";

  const std::string data_hash_before = file_bytes(data);

  RunResult s = run("train --stage spatial --data " + data.string() + " --out " + spat.string() +
                    " --arch " + arch.string() + " --iters 3 --batch 2 --seq-len 2 --log " +
                    log.string());
  CHECK(s.code == 0);
  CHECK(s.out.find("stage spatial: 3 iterations") != std::string::npos);
  CHECK(fs::exists(spat));
  CHECK(fs::exists(log));
  {
    std::ifstream in(log);
    std::string header;
    std::getline(in, header);
    CHECK(header == "iter,stage,loss,lr");
  }

  RunResult t = run("train --stage temporal --data " + data.string() + " --out " + temp.string() +
                    " --arch " + arch.string() + " --iters 3 --batch 2 --seq-len 2");
  CHECK(t.code == 0);

  RunResult f = run("train --stage fusion --data " + data.string() + " --out " + fuse.string() +
                    " --arch " + arch.string() + " --spatial " + spat.string() + " --temporal " +
                    temp.string() + " --iters 3 --batch 2 --seq-len 2");
  CHECK(f.code == 0);

  // fusion requires both upstream checkpoints
  RunResult f_missing = run("train --stage fusion --data " + data.string() + " --out " +
                            (scratch_dir() / "no.ckpt").string() + " --iters 1");
  CHECK(f_missing.code == 1);

  // training must never touch its input data
  CHECK(file_bytes(data) == data_hash_before);

  const fs::path pred = scratch_dir() / "pred.txt";
  const fs::path pred_s = scratch_dir() / "pred_spatial.txt";
  const fs::path pred_t = scratch_dir() / "pred_temporal.txt";
  const fs::path truth = scratch_dir() / "truth.txt";
  RunResult p = run("predict --spatial " + spat.string() + " --temporal " + temp.string() +
                    " --fusion " + fuse.string() + " --data " + data.string() + " --out " +
                    pred.string() + " --spatial-out " + pred_s.string() + " --temporal-out " +
                    pred_t.string() + " --truth-out " + truth.string());
  CHECK(p.code == 0);
  REQUIRE(fs::exists(pred));
  REQUIRE(fs::exists(truth));

  const auto pred_rows = read_pose_lines(pred.string(), 6);
  const auto truth_rows = read_pose_lines(truth.string(), 6);
  CHECK(pred_rows.size() == 6);  // 3 sequences x 2 frames
  CHECK(truth_rows.size() == 6);

  const fs::path report = scratch_dir() / "report.csv";
  const fs::path curve = scratch_dir() / "curve.csv";
  const fs::path svg = scratch_dir() / "curve.svg";
  RunResult e = run("eval --pred " + pred.string() + " --truth " + truth.string() + " --out " +
                    report.string() + " --curve " + curve.string() + " --svg " + svg.string());
  CHECK(e.code == 0);
  CHECK(e.out.find("average") != std::string::npos);
  CHECK(fs::exists(report));
  CHECK(fs::exists(curve));
  CHECK(fs::exists(svg));

  const fs::path sweep_csv = scratch_dir() / "sweep.csv";
  RunResult sweep = run("eval --pred " + pred.string() + " --truth " + truth.string() +
                        " --sweep " + sweep_csv.string() + " --pred-temporal " + pred_t.string() +
                        " --pred-spatial " + pred_s.string());
  CHECK(sweep.code == 0);
  CHECK(sweep.out.find("best fixed weight") != std::string::npos);
  CHECK(fs::exists(sweep_csv));

  // sweep options are all-or-nothing
  RunResult half = run("eval --pred " + pred.string() + " --truth " + truth.string() + " --sweep " +
                       (scratch_dir() / "half.csv").string() + " --pred-temporal " +
                       pred_t.string());
  CHECK(half.code == 1);

  // prediction against a checkpoint of the wrong kind is a contract error
  RunResult wrong = run("predict --spatial " + temp.string() + " --temporal " + temp.string() +
                        " --fusion " + fuse.string() + " --data " + data.string() + " --out " +
                        (scratch_dir() / "w.txt").string());
  CHECK(wrong.code == 1);
}

TEST_CASE("gradcheck subcommand passes clean and fails under fault injection") {
  RunResult ok = run("gradcheck --seeds 2 --max-coords 6");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("all passed") != std::string::npos);
  CHECK(ok.out.find("FAIL") == std::string::npos);

  RunResult bad = run("gradcheck --seeds 1 --max-coords 6 --perturb op.fully_connected");
  CHECK(bad.code == 1);
  CHECK(bad.out.find("FAIL op.fully_connected") != std::string::npos);
}

TEST_CASE("convert ingests pgm frames with pose sidecars") {
  const fs::path dir = scratch_dir() / "capture";
  fs::create_directories(dir);

  // four frames of a moving square, 24x24 px, plus two-joint pose sidecars.
  // side length 8 px at 10 mm/px keeps the hand inside a 160 mm cube.
  const int W = 24, K = 2;
  for (int f = 0; f < 4; ++f) {
    RawDepthFrame raw;
    raw.width = W;
    raw.height = W;
    raw.invalid = 0.0f;
    raw.depth_mm.assign(static_cast<std::size_t>(W) * W, 0.0f);
    const int ox = 6 + f, oy = 8;
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        raw.depth_mm[static_cast<std::size_t>(oy + i) * W + ox + j] =
            500.0f + static_cast<float>(i);
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03d", f);
    write_pgm16((dir / (std::string(name) + ".pgm")).string(), raw, 1.0);
    std::ofstream pose(dir / (std::string(name) + ".txt"));
    // joint 0 at the square centre, joint 1 one pixel right of it
    pose << (ox + 4.0) << " " << (oy + 4.0) << " " << 503.5 << "\n";
    pose << (ox + 5.0) << " " << (oy + 4.0) << " " << 503.5 << "\n";
    REQUIRE(K == 2);
  }

  const fs::path out = scratch_dir() / "converted.hpd1";
  RunResult r = run("convert --dir " + dir.string() + " --out " + out.string() +
                    " --seq-len 2 --size 16 --layers 4 --cube-mm 160 --mm-per-px 10");
  CHECK(r.code == 0);
  CHECK(r.out.find("converted 4 frames into 2 sequences") != std::string::npos);

  Hpd1Dataset ds = load_hpd1(out.string());
  CHECK(ds.size == 16);
  CHECK(ds.joints == 2);
  CHECK(ds.layers == 4);
  CHECK(ds.seq_len == 2);
  REQUIRE(ds.frames.size() == 4);
  CHECK(ds.frames[0].seq == 0);
  CHECK(ds.frames[1].idx == 1);
  CHECK(ds.frames[2].seq == 1);

  // the crop box recentres on the square, so joint 0 sits near the origin
  for (const auto& fr : ds.frames) {
    CHECK(std::abs(fr.pose[0]) < 0.2f);  // normalized x
    CHECK(std::abs(fr.pose[1]) < 0.2f);
    // joint 1 is 10 mm right of joint 0: 10 / 80 = 0.125 in normalized units
    CHECK(fr.pose[3] - fr.pose[0] == doctest::Approx(0.125).epsilon(1e-3));
  }

  // a frame without its pose sidecar is an error
  const fs::path orphan = dir / "frame_099.pgm";
  fs::copy_file(dir / "frame_000.pgm", orphan);
  RunResult bad = run("convert --dir " + dir.string() + " --out " +
                      (scratch_dir() / "nope.hpd1").string() +
                      " --seq-len 2 --size 16 --layers 4 --cube-mm 160 --mm-per-px 10");
  CHECK(bad.code == 2);
  fs::remove(orphan);

  // an empty directory has nothing to convert
  const fs::path empty = scratch_dir() / "empty";
  fs::create_directories(empty);
  RunResult none = run("convert --dir " + empty.string() + " --out " +
                       (scratch_dir() / "none.hpd1").string() + " --seq-len 2");
  CHECK(none.code != 0);
}

TEST_CASE("bench compares serial and parallel inference on the same checkpoints") {
  const fs::path data = tiny_dataset();
  const fs::path arch = tiny_arch_file();
  const fs::path spat = scratch_dir() / "bench_s.ckpt";
  const fs::path temp = scratch_dir() / "bench_t.ckpt";
  const fs::path fuse = scratch_dir() / "bench_f.ckpt";
  REQUIRE(run("train --stage spatial --data " + data.string() + " --out " + spat.string() +
              " --arch " + arch.string() + " --iters 1 --batch 2 --seq-len 2")
              .code == 0);
  REQUIRE(run("train --stage temporal --data " + data.string() + " --out " + temp.string() +
              " --arch " + arch.string() + " --iters 1 --batch 2 --seq-len 2")
              .code == 0);
  REQUIRE(run("train --stage fusion --data " + data.string() + " --out " + fuse.string() +
              " --arch " + arch.string() + " --spatial " + spat.string() + " --temporal " +
              temp.string() + " --iters 1 --batch 2 --seq-len 2")
              .code == 0);

  RunResult b = run("bench --spatial " + spat.string() + " --temporal " + temp.string() +
                    " --fusion " + fuse.string() + " --data " + data.string() + " --passes 2");
  CHECK(b.code == 0);
  CHECK(b.out.find("identical") != std::string::npos);
  CHECK(b.out.find("fps") != std::string::npos);
}
