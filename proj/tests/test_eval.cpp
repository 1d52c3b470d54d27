#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stpose/common.hpp"
#include "stpose/eval.hpp"
#include "stpose/rng.hpp"
#include "stpose/textio.hpp"

using namespace stpose;

namespace {

PredictionSet random_set(int frames, int joints, Rng& rng, double spread = 30.0) {
  PredictionSet s;
  s.joints = joints;
  for (int f = 0; f < frames; ++f) {
    std::vector<double> t(static_cast<std::size_t>(joints) * 3), p(t.size());
    for (auto& v : t) v = rng.uniform(-100.0, 100.0);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = t[i] + rng.uniform(-spread, spread);
    s.truth.push_back(std::move(t));
    s.pred.push_back(std::move(p));
  }
  return s;
}

// independent scalar transcription of the metric definitions
std::vector<double> oracle_per_joint(const PredictionSet& s) {
  std::vector<double> out(static_cast<std::size_t>(s.joints), 0.0);
  for (std::size_t f = 0; f < s.pred.size(); ++f)
    for (int k = 0; k < s.joints; ++k) {
      double d2 = 0;
      for (int a = 0; a < 3; ++a) {
        const double d = s.pred[f][static_cast<std::size_t>(3 * k + a)] -
                         s.truth[f][static_cast<std::size_t>(3 * k + a)];
        d2 += d * d;
      }
      out[static_cast<std::size_t>(k)] += std::sqrt(d2);
    }
  for (auto& v : out) v /= static_cast<double>(s.pred.size());
  return out;
}

double oracle_frame_max(const PredictionSet& s, std::size_t f) {
  double worst = 0;
  for (int k = 0; k < s.joints; ++k) {
    double d2 = 0;
    for (int a = 0; a < 3; ++a) {
      const double d = s.pred[f][static_cast<std::size_t>(3 * k + a)] -
                       s.truth[f][static_cast<std::size_t>(3 * k + a)];
      d2 += d * d;
    }
    worst = std::max(worst, std::sqrt(d2));
  }
  return worst;
}

std::filesystem::path tmp_file(const char* stem) {
  return std::filesystem::temp_directory_path() / stem;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("per-joint and average errors match a scalar transcription") {
  Rng rng = Rng::substream(60, Rng::tag("test.metrics"));
  for (int trial = 0; trial < 40; ++trial) {
    const int frames = 1 + static_cast<int>(rng.uniform_int(0, 19));
    const int joints = 1 + static_cast<int>(rng.uniform_int(0, 9));
    PredictionSet s = random_set(frames, joints, rng);
    const auto got = per_joint_error(s);
    const auto want = oracle_per_joint(s);
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < want.size(); ++k)
      CHECK(std::abs(got[k] - want[k]) <= 1e-12 * std::max(1.0, std::abs(want[k])));
    double mean = 0;
    for (double v : want) mean += v;
    mean /= static_cast<double>(want.size());
    CHECK(std::abs(average_error(s) - mean) <= 1e-12 * std::max(1.0, mean));
  }
}

TEST_CASE("a 3-4-5 displacement measures exactly five millimetres") {
  PredictionSet s;
  s.joints = 2;
  s.truth = {{0, 0, 0, 10, 10, 10}};
  s.pred = {{3, 4, 0, 10, 10, 10}};
  const auto pj = per_joint_error(s);
  CHECK(pj[0] == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(pj[1] == 0.0);
  CHECK(average_error(s) == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("metrics are symmetric and translation invariant") {
  Rng rng = Rng::substream(61, Rng::tag("test.sym"));
  PredictionSet s = random_set(12, 4, rng);
  PredictionSet swapped = s;
  std::swap(swapped.pred, swapped.truth);
  const auto a = per_joint_error(s);
  const auto b = per_joint_error(swapped);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);

  PredictionSet shifted = s;
  for (auto& row : shifted.pred)
    for (std::size_t i = 0; i < row.size(); ++i) row[i] += (i % 3 == 0 ? 17.0 : -4.0);
  for (auto& row : shifted.truth)
    for (std::size_t i = 0; i < row.size(); ++i) row[i] += (i % 3 == 0 ? 17.0 : -4.0);
  const auto c = per_joint_error(shifted);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - c[k]) <= 1e-9);
}

TEST_CASE("the accuracy curve is the empirical CDF of per-frame worst error") {
  Rng rng = Rng::substream(62, Rng::tag("test.curve"));
  PredictionSet s = random_set(25, 5, rng);
  const auto thresholds = default_thresholds();
  REQUIRE(thresholds.size() == 81);
  CHECK(thresholds.front() == 0.0);
  CHECK(thresholds.back() == 80.0);

  const auto curve = accuracy_curve(s, thresholds);
  REQUIRE(curve.size() == thresholds.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    CHECK(curve[i] >= 0.0);
    CHECK(curve[i] <= 1.0);
    CHECK(curve[i] >= prev);  // monotone in the threshold
    prev = curve[i];

    int within = 0;
    for (std::size_t f = 0; f < s.pred.size(); ++f)
      if (oracle_frame_max(s, f) <= thresholds[i]) ++within;
    CHECK(curve[i] == doctest::Approx(static_cast<double>(within) / 25.0).epsilon(1e-15));
  }

  // exact predictions make the curve one everywhere, including at zero
  PredictionSet perfect = s;
  perfect.pred = perfect.truth;
  const auto flat = accuracy_curve(perfect, thresholds);
  for (double v : flat) CHECK(v == 1.0);

  // a huge threshold always captures every frame
  const auto top = accuracy_curve(s, {1e9});
  CHECK(top[0] == 1.0);

  CHECK_THROWS_AS((void)accuracy_curve(s, {5.0, 1.0}), ContractError);  // unsorted grid
}

TEST_CASE("the fixed-weight sweep matches blending by hand and hits its endpoints") {
  Rng rng = Rng::substream(63, Rng::tag("test.sweep"));
  PredictionSet temporal = random_set(10, 3, rng);
  PredictionSet spatial = temporal;
  for (auto& row : spatial.pred)
    for (auto& v : row) v += rng.uniform(-20.0, 20.0);  // same truth, different predictions

  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  const auto rows = fixed_weight_fusion_sweep(temporal, spatial, grid);
  REQUIRE(rows.size() == grid.size());

  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].w == grid[i]);
    PredictionSet blend = temporal;
    for (std::size_t f = 0; f < blend.pred.size(); ++f)
      for (std::size_t j = 0; j < blend.pred[f].size(); ++j)
        blend.pred[f][j] = grid[i] * temporal.pred[f][j] + (1.0 - grid[i]) * spatial.pred[f][j];
    CHECK(rows[i].avg_error == doctest::Approx(average_error(blend)).epsilon(1e-12));
  }
  // w = 0 is the spatial model alone, w = 1 the temporal model alone
  CHECK(rows.front().avg_error == doctest::Approx(average_error(spatial)).epsilon(1e-12));
  CHECK(rows.back().avg_error == doctest::Approx(average_error(temporal)).epsilon(1e-12));

  // differing truth between the two sets is a contract violation
  PredictionSet other = spatial;
  other.truth[0][0] += 1.0;
  CHECK_THROWS_AS((void)fixed_weight_fusion_sweep(temporal, other, grid), ContractError);
}

TEST_CASE("prediction sets validate their shape and contents") {
  PredictionSet s;
  s.joints = 2;
  CHECK_THROWS_AS(s.validate(), ContractError);  // empty

  s.truth = {{0, 0, 0, 1, 1, 1}};
  s.pred = {{0, 0, 0, 1, 1, 1}};
  CHECK_NOTHROW(s.validate());

  PredictionSet ragged = s;
  ragged.pred[0].push_back(0.0);
  CHECK_THROWS_AS(ragged.validate(), ContractError);

  PredictionSet nan_set = s;
  nan_set.pred[0][2] = std::nan("");
  CHECK_THROWS_AS(nan_set.validate(), ContractError);

  PredictionSet uneven = s;
  uneven.truth.push_back({0, 0, 0, 1, 1, 1});
  CHECK_THROWS_AS(uneven.validate(), ContractError);
}

TEST_CASE("report, curve and sweep CSV files have the documented layout") {
  Rng rng = Rng::substream(64, Rng::tag("test.csv"));
  PredictionSet s = random_set(6, 3, rng);
  MetricsReport rep = compute_metrics(s, default_thresholds());
  REQUIRE(rep.per_joint.size() == 3);
  CHECK(rep.average == doctest::Approx(average_error(s)).epsilon(1e-15));

  const auto rp = tmp_file("stpose_test_report.csv");
  write_report_csv(rp.string(), rep);
  {
    std::ifstream in(rp);
    std::string line;
    std::getline(in, line);
    CHECK(line == "joint,error_mm");
    int joints = 0;
    bool avg = false;
    while (std::getline(in, line)) {
      if (line.rfind("average,", 0) == 0)
        avg = true;
      else if (!line.empty())
        ++joints;
    }
    CHECK(joints == 3);
    CHECK(avg);
  }
  std::filesystem::remove(rp);

  const auto cp = tmp_file("stpose_test_curve.csv");
  write_curve_csv(cp.string(), rep);
  {
    std::ifstream in(cp);
    std::string line;
    std::getline(in, line);
    CHECK(line == "threshold_mm,fraction");
    int n = 0;
    while (std::getline(in, line))
      if (!line.empty()) ++n;
    CHECK(n == 81);
  }
  std::filesystem::remove(cp);

  const auto sp = tmp_file("stpose_test_sweep.csv");
  write_sweep_csv(sp.string(), {{0.0, 12.0}, {0.5, 9.5}, {1.0, 11.0}});
  {
    const std::string text = slurp(sp);
    CHECK(text.rfind("w,avg_error_mm\n", 0) == 0);
    CHECK(text.find("0.5,9.5") != std::string::npos);
  }
  std::filesystem::remove(sp);

  const auto vp = tmp_file("stpose_test_curve.svg");
  write_curve_svg(vp.string(), rep);
  {
    const std::string text = slurp(vp);
    CHECK(text.find("<svg") != std::string::npos);
    CHECK(text.find("polyline") != std::string::npos);
  }
  std::filesystem::remove(vp);
}

TEST_CASE("pose line files round-trip and reject ragged content") {
  const auto path = tmp_file("stpose_test_poses.txt");
  Rng rng = Rng::substream(65, Rng::tag("test.poselines"));

  // float-precision values survive the text format exactly
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> row(9);
    for (auto& v : row) v = static_cast<double>(static_cast<float>(rng.uniform(-150.0, 150.0)));
    rows.push_back(std::move(row));
  }
  write_pose_lines(path.string(), rows);
  const auto back = read_pose_lines(path.string(), 9);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < 9; ++j)
      CHECK(static_cast<float>(back[i][j]) == static_cast<float>(rows[i][j]));

  // explicit width mismatch and ragged files are I/O errors
  CHECK_THROWS_AS((void)read_pose_lines(path.string(), 6), IoError);
  {
    std::ofstream out(path, std::ios::trunc);
    out << "1 2 3\n4 5\n";
  }
  CHECK_THROWS_AS((void)read_pose_lines(path.string(), 0), IoError);
  {
    std::ofstream out(path, std::ios::trunc);
    out << "1 2 banana\n";
  }
  CHECK_THROWS_AS((void)read_pose_lines(path.string(), 0), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS((void)read_pose_lines(path.string(), 0), IoError);  // missing file
}
