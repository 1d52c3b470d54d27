#pragma once

#include <cstdint>
#include <vector>

#include "stpose/hpd1.hpp"

namespace stpose {

// Synthetic articulated depth sequences: per sequence, `joints` blob centres
// drift through the crop cube on a smooth random walk and every frame renders
// them as Gaussian depth bumps with nearest-surface occlusion. Ground truth is
// the exact centres, so error metrics have a true zero.
struct SynthConfig {
  int size = 64;          // M, crop resolution
  int joints = 6;         // K
  int layers = 8;         // L recorded in the container
  int seq_len = 16;       // T
  int n_sequences = 256;
  double smoothness = 0.05;  // max per-frame joint displacement, fraction of cube
  double cube_mm = 300.0;
  std::uint64_t seed = 1;

  void validate() const;  // throws ContractError
};

// Deterministic: the same config always produces the same bytes. Sequences use
// independent RNG substreams keyed by (seed, sequence id).
Hpd1Dataset generate_dataset(const SynthConfig& cfg);

// The raw world-space walk for one sequence, seq_len*joints*3 values in mm,
// before any rendering or cropping. Exposed so the per-frame displacement
// bound can be checked against the same numbers the renderer consumed.
std::vector<double> sequence_positions(const SynthConfig& cfg, std::uint32_t seq);

}  // namespace stpose
