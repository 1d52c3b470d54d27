#include "stpose/synth.hpp"

#include <cmath>
#include <string>

#include "stpose/preprocess.hpp"
#include "stpose/rng.hpp"

namespace stpose {

namespace {

// Geometry budget, all fractions of the cube side. Layout spread dominates so
// joints stay visually distinct; the shared base walk carries most of the
// motion and is removed again by crop recentring; per-joint offsets keep the
// articulation. Worst-case recentred coordinates stay inside half a cube with
// margin, which is what makes normalize_pose clamp-free by construction.
constexpr double kLayoutBound = 0.15;
constexpr double kBaseBound = 0.08;
constexpr double kOffsetBound = 0.04;
constexpr double kBaseStepShare = 0.7;   // of the smoothness budget
constexpr double kOffsetStepShare = 0.3;
constexpr double kCameraZ = 600.0;       // mm, arbitrary positive stand-off

struct Blob {
  double sigma;   // mm
  double height;  // mm
  double cutoff2; // mm^2
};

Blob blob_for_joint(int j, int joints, double cube) {
  const double f = joints > 1 ? static_cast<double>(j) / (joints - 1) : 0.0;
  Blob b;
  // distinct radii and heights per joint so no two joints are interchangeable
  b.sigma = cube * (0.035 + 0.020 * f);
  b.height = cube * (0.050 + 0.016 * f);
  const double cut = 2.2 * b.sigma;
  b.cutoff2 = cut * cut;
  return b;
}

// One uniformly random step whose Euclidean norm cannot exceed `step`, added
// to pos and kept inside the per-component bound by resampling. The resample
// loop terminates in practice immediately; the fallback keeps the walk legal
// even if it would not.
void walk_step(double pos[3], double step, double bound, Rng& rng) {
  const double c = step / std::sqrt(3.0);
  for (int tries = 0; tries < 200; ++tries) {
    double d[3];
    for (double& v : d) v = rng.uniform(-c, c);
    bool ok = true;
    for (int a = 0; a < 3; ++a)
      if (std::abs(pos[a] + d[a]) > bound) ok = false;
    if (ok) {
      for (int a = 0; a < 3; ++a) pos[a] += d[a];
      return;
    }
  }
}

// Walk for one sequence; call order against the substream is the contract
// shared by generate_dataset and sequence_positions.
std::vector<double> walk_sequence(const SynthConfig& cfg, std::uint32_t seq,
                                  std::vector<Blob>* blobs_out) {
  Rng rng = Rng::substream(cfg.seed, Rng::tag("synth.seq") + seq);
  const int k = cfg.joints, t_len = cfg.seq_len;
  const double cube = cfg.cube_mm;

  std::vector<double> layout(static_cast<size_t>(k) * 3);
  for (auto& v : layout) v = rng.uniform(-kLayoutBound * cube, kLayoutBound * cube);

  std::vector<double> base(3);
  for (auto& v : base) v = rng.uniform(-kBaseBound * cube, kBaseBound * cube);
  std::vector<double> offset(static_cast<size_t>(k) * 3);
  for (auto& v : offset) v = rng.uniform(-kOffsetBound * cube, kOffsetBound * cube);

  const double base_step = kBaseStepShare * cfg.smoothness * cube;
  const double off_step = kOffsetStepShare * cfg.smoothness * cube;

  std::vector<double> pos(static_cast<size_t>(t_len) * k * 3);
  for (int t = 0; t < t_len; ++t) {
    if (t > 0) {
      walk_step(base.data(), base_step, kBaseBound * cube, rng);
      for (int j = 0; j < k; ++j)
        walk_step(&offset[3 * j], off_step, kOffsetBound * cube, rng);
    }
    for (int j = 0; j < k; ++j) {
      double* p = &pos[(static_cast<size_t>(t) * k + j) * 3];
      for (int a = 0; a < 3; ++a)
        p[a] = layout[3 * j + a] + base[a] + offset[3 * j + a];
      p[2] += kCameraZ;
    }
  }

  if (blobs_out) {
    blobs_out->clear();
    for (int j = 0; j < k; ++j) blobs_out->push_back(blob_for_joint(j, k, cube));
  }
  return pos;
}

RawDepthFrame render_frame(const double* joints_xyz, const std::vector<Blob>& blobs, int canvas,
                           double mm_per_px) {
  RawDepthFrame raw;
  raw.width = canvas;
  raw.height = canvas;
  raw.invalid = 0.0f;
  raw.depth_mm.assign(static_cast<size_t>(canvas) * canvas, raw.invalid);
  const double half = canvas / 2.0;
  for (int i = 0; i < canvas; ++i) {
    const double yw = (i + 0.5 - half) * mm_per_px;
    for (int j = 0; j < canvas; ++j) {
      const double xw = (j + 0.5 - half) * mm_per_px;
      double depth = 0;
      bool hit = false;
      for (size_t b = 0; b < blobs.size(); ++b) {
        const double dx = xw - joints_xyz[3 * b + 0];
        const double dy = yw - joints_xyz[3 * b + 1];
        const double r2 = dx * dx + dy * dy;
        if (r2 > blobs[b].cutoff2) continue;
        const double d =
            joints_xyz[3 * b + 2] +
            blobs[b].height * (1.0 - std::exp(-r2 / (2.0 * blobs[b].sigma * blobs[b].sigma)));
        if (!hit || d < depth) {  // nearest surface wins: occlusion
          depth = d;
          hit = true;
        }
      }
      if (hit) raw.depth_mm[static_cast<size_t>(i) * canvas + j] = static_cast<float>(depth);
    }
  }
  return raw;
}

}  // namespace

void SynthConfig::validate() const {
  if (size < 8) throw ContractError("synth: size must be at least 8");
  if (joints < 2) throw ContractError("synth: joints must be at least 2");
  if (layers < 1) throw ContractError("synth: layers must be at least 1");
  if (seq_len < 2) throw ContractError("synth: seq_len must be at least 2");
  if (n_sequences < 1) throw ContractError("synth: n_sequences must be at least 1");
  if (!(smoothness > 0.0 && smoothness < 0.5))
    throw ContractError("synth: smoothness must lie in (0, 0.5)");
  if (cube_mm <= 0) throw ContractError("synth: cube_mm must be positive");
}

std::vector<double> sequence_positions(const SynthConfig& cfg, std::uint32_t seq) {
  cfg.validate();
  return walk_sequence(cfg, seq, nullptr);
}

Hpd1Dataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Hpd1Dataset ds;
  ds.size = cfg.size;
  ds.joints = cfg.joints;
  ds.layers = cfg.layers;
  ds.seq_len = cfg.seq_len;
  ds.frames.reserve(static_cast<size_t>(cfg.n_sequences) * cfg.seq_len);

  const int canvas = cfg.size * 3 / 2;  // crop box side is `size` px, margin either side
  const double mm_per_px = cfg.cube_mm / cfg.size;

  std::vector<Blob> blobs;
  for (int s = 0; s < cfg.n_sequences; ++s) {
    const std::vector<double> pos = walk_sequence(cfg, static_cast<std::uint32_t>(s), &blobs);
    for (int t = 0; t < cfg.seq_len; ++t) {
      const double* jp = &pos[(static_cast<size_t>(t) * cfg.joints) * 3];
      const RawDepthFrame raw = render_frame(jp, blobs, canvas, mm_per_px);
      const DepthFrame frame = crop_hand(raw, cfg.cube_mm, mm_per_px, cfg.size);

      // world -> crop-centre-local coordinates; the render grid's world origin
      // sits at the canvas centre
      const double ccx = (frame.box.cx - canvas / 2.0) * mm_per_px;
      const double ccy = (frame.box.cy - canvas / 2.0) * mm_per_px;
      HandPose pose;
      pose.joints = cfg.joints;
      pose.xyz.resize(static_cast<size_t>(cfg.joints) * 3);
      for (int j = 0; j < cfg.joints; ++j) {
        pose.xyz[3 * j + 0] = jp[3 * j + 0] - ccx;
        pose.xyz[3 * j + 1] = jp[3 * j + 1] - ccy;
        pose.xyz[3 * j + 2] = jp[3 * j + 2] - frame.d_center;
      }
      const NormalizedPose npose = normalize_pose(pose, frame);
      if (npose.clamped != 0)
        throw ContractError("synth: joint left the cube in sequence " + std::to_string(s) +
                            " frame " + std::to_string(t) + "; geometry budget violated");

      Hpd1Frame rec;
      rec.depth = frame.values;
      rec.pose.assign(npose.xyz.begin(), npose.xyz.end());
      rec.seq = static_cast<std::uint32_t>(s);
      rec.idx = static_cast<std::uint32_t>(t);
      ds.frames.push_back(std::move(rec));
    }
  }
  ds.validate();
  return ds;
}

}  // namespace stpose
