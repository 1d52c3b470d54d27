#include "stpose/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <utility>

namespace stpose {

DepthFrame crop_hand(const RawDepthFrame& raw, double cube_mm, double mm_per_px, int out_size) {
  if (raw.width <= 0 || raw.height <= 0 ||
      raw.depth_mm.size() != static_cast<size_t>(raw.width) * raw.height)
    throw ContractError("crop_hand: malformed raw frame");
  if (cube_mm <= 0 || mm_per_px <= 0 || out_size <= 0)
    throw ContractError("crop_hand: cube_mm, mm_per_px and out_size must be positive");

  // centroid of valid pixels, pixel centres at +0.5
  double sx = 0, sy = 0, sd = 0;
  size_t n = 0;
  for (int i = 0; i < raw.height; ++i) {
    for (int j = 0; j < raw.width; ++j) {
      const float d = raw.depth_mm[static_cast<size_t>(i) * raw.width + j];
      if (d == raw.invalid) continue;
      sx += j + 0.5;
      sy += i + 0.5;
      sd += d;
      ++n;
    }
  }
  if (n == 0) throw ContractError("crop_hand: frame has no valid pixel");

  DepthFrame out;
  out.size = out_size;
  out.cube_mm = cube_mm;
  out.mm_per_px = mm_per_px;
  out.d_center = sd / static_cast<double>(n);
  out.box.cx = sx / static_cast<double>(n);
  out.box.cy = sy / static_cast<double>(n);
  out.box.side = cube_mm / mm_per_px;
  out.values.resize(static_cast<size_t>(out_size) * out_size, 1.0f);

  const double ox = out.box.cx - out.box.side / 2;
  const double oy = out.box.cy - out.box.side / 2;
  const double step = out.box.side / out_size;
  const double half = cube_mm / 2;
  for (int i = 0; i < out_size; ++i) {
    const double src_y = oy + (i + 0.5) * step;
    const int row = static_cast<int>(std::floor(src_y));
    for (int j = 0; j < out_size; ++j) {
      const double src_x = ox + (j + 0.5) * step;
      const int col = static_cast<int>(std::floor(src_x));
      float v = 1.0f;  // background
      if (row >= 0 && row < raw.height && col >= 0 && col < raw.width) {
        const float d = raw.depth_mm[static_cast<size_t>(row) * raw.width + col];
        if (d != raw.invalid) {
          const double z = (d - out.d_center) / half;
          if (z >= -1.0 && z < 1.0) v = static_cast<float>(z);
        }
      }
      out.values[static_cast<size_t>(i) * out_size + j] = v;
    }
  }

  double dmin = 0, dmax = 0;
  bool any = false;
  for (float v : out.values) {
    if (v >= 1.0f) continue;
    const double d = out.d_center + static_cast<double>(v) * half;
    if (!any || d < dmin) dmin = d;
    if (!any || d > dmax) dmax = d;
    any = true;
  }
  out.d_min = any ? dmin : out.d_center;
  out.d_max = any ? dmax : out.d_center;
  return out;
}

SlicedVolume slice_volume(const DepthFrame& frame, int layers) {
  if (layers <= 0) throw ContractError("slice_volume: layers must be positive");
  const int m = frame.size;
  if (m <= 0 || frame.values.size() != static_cast<size_t>(m) * m)
    throw ContractError("slice_volume: malformed frame");

  double vmin = 0, vmax = 0;
  bool any = false;
  for (float v : frame.values) {
    if (v >= 1.0f) continue;
    if (!any || v < vmin) vmin = v;
    if (!any || v > vmax) vmax = v;
    any = true;
  }

  SlicedVolume vol;
  vol.size = m;
  vol.layers = layers;
  vol.v.assign(static_cast<size_t>(layers) * m * m, 0);
  if (!any) return vol;

  const double span = vmax - vmin;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const float v = frame.values[static_cast<size_t>(i) * m + j];
      if (v >= 1.0f) continue;
      int l = 0;
      if (span > 0) {
        l = static_cast<int>(std::floor(layers * ((v - vmin) / span)));
        l = std::clamp(l, 0, layers - 1);
      }
      vol.v[(static_cast<size_t>(l) * m + i) * m + j] = 1;
    }
  }
  return vol;
}

AugmentOp random_augment_op(Rng& rng) {
  return static_cast<AugmentOp>(rng.uniform_int(0, 4));
}

void augment_frame(DepthFrame& frame, AugmentOp op) {
  const int m = frame.size;
  if (m <= 0 || frame.values.size() != static_cast<size_t>(m) * m)
    throw ContractError("augment_frame: malformed frame");
  std::vector<float> out(frame.values.size());
  auto src = [&](int i, int j) -> float { return frame.values[static_cast<size_t>(i) * m + j]; };
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      float v;
      switch (op) {
        case AugmentOp::rot90: v = src(m - 1 - j, i); break;
        case AugmentOp::rot270: v = src(j, m - 1 - i); break;
        case AugmentOp::rot180: v = src(m - 1 - i, m - 1 - j); break;
        case AugmentOp::flip_h: v = src(i, m - 1 - j); break;
        case AugmentOp::flip_v: v = src(m - 1 - i, j); break;
        default: throw ContractError("augment_frame: unknown op");
      }
      out[static_cast<size_t>(i) * m + j] = v;
    }
  }
  frame.values = std::move(out);
}

void augment_pose(HandPose& pose, AugmentOp op) {
  if (pose.xyz.size() != static_cast<size_t>(pose.joints) * 3)
    throw ContractError("augment_pose: malformed pose");
  for (int k = 0; k < pose.joints; ++k) {
    double& x = pose.xyz[3 * k + 0];
    double& y = pose.xyz[3 * k + 1];
    const double px = x, py = y;
    switch (op) {
      case AugmentOp::rot90: x = -py; y = px; break;
      case AugmentOp::rot270: x = py; y = -px; break;
      case AugmentOp::rot180: x = -px; y = -py; break;
      case AugmentOp::flip_h: x = -px; break;
      case AugmentOp::flip_v: y = -py; break;
      default: throw ContractError("augment_pose: unknown op");
    }
  }
}

NormalizedPose normalize_pose(const HandPose& pose, const DepthFrame& frame) {
  if (pose.xyz.size() != static_cast<size_t>(pose.joints) * 3)
    throw ContractError("normalize_pose: malformed pose");
  if (frame.cube_mm <= 0) throw ContractError("normalize_pose: frame has no cube size");
  const double half = frame.cube_mm / 2;
  NormalizedPose out;
  out.xyz.resize(pose.xyz.size());
  for (int k = 0; k < pose.joints; ++k) {
    bool hit = false;
    for (int a = 0; a < 3; ++a) {
      double v = pose.xyz[3 * k + a] / half;
      if (v < -1.0 || v > 1.0) {
        v = std::clamp(v, -1.0, 1.0);
        hit = true;
      }
      out.xyz[3 * k + a] = v;
    }
    if (hit) ++out.clamped;
  }
  return out;
}

HandPose denormalize_pose(const std::vector<double>& normalized, double cube_mm,
                          std::array<double, 3> center) {
  if (normalized.size() % 3 != 0) throw ContractError("denormalize_pose: length not a multiple of 3");
  if (cube_mm <= 0) throw ContractError("denormalize_pose: cube_mm must be positive");
  HandPose pose;
  pose.joints = static_cast<int>(normalized.size() / 3);
  pose.xyz.resize(normalized.size());
  const double half = cube_mm / 2;
  for (int k = 0; k < pose.joints; ++k)
    for (int a = 0; a < 3; ++a)
      pose.xyz[3 * k + a] = center[a] + normalized[3 * k + a] * half;
  return pose;
}

namespace {

int pgm_token(std::FILE* f) {
  // next integer token, skipping whitespace and # comments
  int c = std::fgetc(f);
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = std::fgetc(f);
    } else if (std::isspace(c)) {
      c = std::fgetc(f);
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) throw IoError("pgm: malformed header");
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > 1 << 30) throw IoError("pgm: header value out of range");
    c = std::fgetc(f);
  }
  return static_cast<int>(v);
}

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};

}  // namespace

RawDepthFrame read_pgm16(const std::string& path, double depth_scale) {
  if (depth_scale <= 0) throw ContractError("read_pgm16: depth_scale must be positive");
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open " + path);
  if (std::fgetc(f.get()) != 'P' || std::fgetc(f.get()) != '5')
    throw IoError(path + ": not a P5 pgm");
  const int w = pgm_token(f.get());
  const int h = pgm_token(f.get());
  const int maxval = pgm_token(f.get());
  if (maxval != 65535) throw IoError(path + ": expected 16-bit pgm (maxval 65535)");
  if (w <= 0 || h <= 0 || static_cast<long>(w) * h > (1 << 28))
    throw IoError(path + ": bad dimensions");

  RawDepthFrame raw;
  raw.width = w;
  raw.height = h;
  raw.invalid = 0.0f;
  raw.depth_mm.resize(static_cast<size_t>(w) * h);
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 2);
  if (std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
    throw IoError(path + ": truncated pixel data");
  for (size_t p = 0; p < raw.depth_mm.size(); ++p) {
    const unsigned count = (static_cast<unsigned>(buf[2 * p]) << 8) | buf[2 * p + 1];  // big-endian
    raw.depth_mm[p] = count == 0 ? raw.invalid : static_cast<float>(count * depth_scale);
  }
  return raw;
}

void write_pgm16(const std::string& path, const RawDepthFrame& raw, double depth_scale) {
  if (depth_scale <= 0) throw ContractError("write_pgm16: depth_scale must be positive");
  if (raw.depth_mm.size() != static_cast<size_t>(raw.width) * raw.height)
    throw ContractError("write_pgm16: malformed raw frame");
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open " + path + " for writing");
  std::fprintf(f.get(), "P5\n%d %d\n65535\n", raw.width, raw.height);
  std::vector<unsigned char> buf(raw.depth_mm.size() * 2);
  for (size_t p = 0; p < raw.depth_mm.size(); ++p) {
    unsigned count = 0;
    const float d = raw.depth_mm[p];
    if (d != raw.invalid) {
      const long long c = std::llround(d / depth_scale);
      count = static_cast<unsigned>(std::clamp<long long>(c, 1, 65535));
    }
    buf[2 * p] = static_cast<unsigned char>(count >> 8);
    buf[2 * p + 1] = static_cast<unsigned char>(count & 0xff);
  }
  if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size())
    throw IoError(path + ": short write");
}

}  // namespace stpose
