#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stpose/common.hpp"

namespace stpose {

// One stored frame: a normalized depth crop plus its normalized pose and its
// position in a sequence. Depth and pose semantics match DepthFrame /
// NormalizedPose; values are kept as float32 exactly as they sit on disk.
struct Hpd1Frame {
  std::vector<float> depth;  // size*size
  std::vector<float> pose;   // 3*joints
  std::uint32_t seq = 0;
  std::uint32_t idx = 0;
};

// In-memory "HPD1" dataset. Frames are held sorted by (seq, idx); loading
// enforces that order, so iteration order never depends on file order.
struct Hpd1Dataset {
  int size = 0;      // M
  int joints = 0;    // K
  int layers = 0;    // L, the slicing depth this data was produced for
  int seq_len = 0;   // T, nominal sequence length
  std::vector<Hpd1Frame> frames;

  // contiguous [begin, end) frame ranges, one per sequence id
  std::vector<std::pair<std::size_t, std::size_t>> sequence_ranges() const;

  void validate() const;  // throws ContractError on structural problems
};

void save_hpd1(const std::string& path, const Hpd1Dataset& ds);
Hpd1Dataset load_hpd1(const std::string& path);

}  // namespace stpose
