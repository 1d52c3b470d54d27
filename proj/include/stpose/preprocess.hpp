#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stpose/common.hpp"
#include "stpose/rng.hpp"

namespace stpose {

// Depth map straight from a sensor or renderer. Pixels equal to `invalid`
// carry no measurement. The projection is orthographic: a pixel spans
// mm_per_px millimetres in x and y at any depth, which the converter and the
// generator both assume.
struct RawDepthFrame {
  int width = 0;
  int height = 0;
  std::vector<float> depth_mm;  // row-major
  float invalid = 0.0f;
};

// Crop window in source pixel coordinates (continuous, pixel centres at +0.5).
struct CropBox {
  double cx = 0, cy = 0;  // centre
  double side = 0;        // square side
};

// Cube-normalised hand crop. values are in [-1, 1]: the centre-of-mass depth
// maps to 0, the cube faces to -1/+1, and out-of-cube or invalid pixels hold
// exactly +1 (background). A foreground pixel is one with value < 1.
struct DepthFrame {
  int size = 0;
  std::vector<float> values;
  CropBox box;
  double d_center = 0;  // mm
  double d_min = 0, d_max = 0;  // mm, over foreground after cropping
  double cube_mm = 0;
  double mm_per_px = 0;
};

// Joint centres, xyz per joint. Coordinates are relative to the crop centre
// (so the crop centre is the origin) in millimetres unless a caller documents
// otherwise; augmentation and normalisation both rely on that origin.
struct HandPose {
  int joints = 0;
  std::vector<double> xyz;  // 3 * joints
};

// Binary occupancy volume: layer l holds the pixels whose depth falls in the
// l-th of `layers` equal slabs between the frame's foreground extremes.
struct SlicedVolume {
  int size = 0;
  int layers = 0;
  std::vector<std::uint8_t> v;  // [layers][size][size]

  std::uint8_t at(int l, int y, int x) const { return v[(l * size + y) * size + x]; }
};

// Centre-of-mass crop: finds the valid-pixel centroid, cuts a cube_mm-sized
// square around it and resamples to out_size x out_size with nearest-neighbour
// lookup, normalising depth into the cube. Throws ContractError when the frame
// has no valid pixel.
DepthFrame crop_hand(const RawDepthFrame& raw, double cube_mm, double mm_per_px, int out_size);

// Every foreground pixel lands in exactly one layer; background columns are
// all zero. A frame whose foreground is a single depth puts everything in
// layer 0.
SlicedVolume slice_volume(const DepthFrame& frame, int layers);

enum class AugmentOp : int { rot90 = 0, rot270 = 1, rot180 = 2, flip_h = 3, flip_v = 4 };

AugmentOp random_augment_op(Rng& rng);

// In-place right-angle rotation or mirror of the value grid about the frame
// centre; a pure pixel permutation, so applying rot180 twice restores the
// original bytes.
void augment_frame(DepthFrame& frame, AugmentOp op);

// The matching rigid map for pose coordinates (origin at the crop centre);
// depth is untouched.
void augment_pose(HandPose& pose, AugmentOp op);

struct NormalizedPose {
  std::vector<double> xyz;  // 3 * joints, each in [-1, 1]
  int clamped = 0;          // joints that fell outside the cube and were clamped
};

// Map pose into the frame's unit cube; out-of-cube joints clamp and count.
NormalizedPose normalize_pose(const HandPose& pose, const DepthFrame& frame);

// Inverse of normalize_pose for a given cube and centre. HPD1 data carries no
// crop metadata, so consumers pass centre (0,0,0) and get cube-local mm, which
// leaves every distance-based metric unchanged.
HandPose denormalize_pose(const std::vector<double>& normalized, double cube_mm,
                          std::array<double, 3> center);

// 16-bit big-endian binary PGM (P5, maxval 65535). depth_scale converts raw
// counts to millimetres; zero counts become the invalid sentinel.
RawDepthFrame read_pgm16(const std::string& path, double depth_scale);
void write_pgm16(const std::string& path, const RawDepthFrame& raw, double depth_scale);

}  // namespace stpose
