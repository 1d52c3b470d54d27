#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stpose/hpd1.hpp"
#include "stpose/models.hpp"

namespace stpose {

// Optimization schedule shared by the three stages. The config file mirrors
// these names (sequence length is written as "T"); cube_mm only converts
// logged validation errors to millimetres.
struct TrainConfig {
  int batch_size = 128;  // frames, except the temporal stage where it counts sequences
  double lr = 1e-3;
  int lr_decay_every = 20000;
  double lr_decay_factor = 0.1;
  int iters_stage_spatial = 2000;
  int iters_stage_temporal = 2000;
  int iters_stage_fusion = 1000;
  std::uint64_t seed = 1;
  int seq_len = 16;  // T
  bool augment = true;
  double cube_mm = 300.0;

  void validate() const;
  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  static TrainConfig from_file(const std::string& path);
};

// lr * factor^floor(iter / decay_every)
double lr_schedule(int iter, const TrainConfig& cfg);

struct TrainLogRow {
  int iter = 0;
  std::string stage;
  double loss = 0;  // batch loss, or validation average error (mm) for *_val rows
  double lr = 0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  double wall_seconds = 0;
  int short_sequences_skipped = 0;  // temporal stage: leftover frames shorter than T
};

// CSV: iter,stage,loss,lr
void write_train_log_csv(const std::string& path, const TrainLog& log);

// Train ids, then validation ids: the last 10% of sequence ids (by sorted id)
// are validation and never shuffled into training.
std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> split_sequences(
    const Hpd1Dataset& data);

// One frame as the networks consume it. `augmented` applies the deterministic
// per-frame augmentation copy (op drawn from (seed, frame index) only).
struct FrameSample {
  std::vector<float> depth;
  std::vector<float> pose;
};
FrameSample materialize_frame(const Hpd1Dataset& data, std::size_t frame_idx, bool augmented,
                              std::uint64_t seed);

// Stages derive the model architecture from the dataset dimensions plus
// desk-scale defaults; arch_base overrides the defaults for the non-data
// fields (layer widths, dropout and so on) when given.
struct SpatialTrainResult {
  SpatialNet<float> net;
  TrainLog log;
};
SpatialTrainResult train_spatial(const Hpd1Dataset& data, const TrainConfig& cfg,
                                 const ArchConfig* arch_base = nullptr);

struct TemporalTrainResult {
  TemporalNet<float> net;
  TrainLog log;
};
TemporalTrainResult train_temporal(const Hpd1Dataset& data, const TrainConfig& cfg,
                                   const ArchConfig* arch_base = nullptr);

// Stage 3 trains only the fusion parameters against the two fixed upstream
// networks; their parameter storage is read, never written.
struct FusionSample {
  std::vector<float> j_temp;  // normalized
  std::vector<float> j_spa;
  std::vector<float> target;
};
struct FusionTrainResult {
  FusionNet<float> net;
  TrainLog log;
};
FusionTrainResult train_fusion(const Hpd1Dataset& data, const TrainConfig& cfg,
                               SpatialNet<float>& spatial, TemporalNet<float>& temporal,
                               const ArchConfig* arch_base = nullptr);

// The optimizer loop behind train_fusion, callable on hand-built prediction
// triples; `val` may be empty.
TrainLog train_fusion_on_predictions(FusionNet<float>& net, const std::vector<FusionSample>& train,
                                     const std::vector<FusionSample>& val, const TrainConfig& cfg);

// Test-mode predictions over a dataset in canonical frame order, one row of
// 3K normalized values per frame. The temporal network consumes whole
// sequences chunked into runs of its configured T; every sequence length must
// be a multiple of T.
std::vector<std::vector<float>> predict_spatial(SpatialNet<float>& net, const Hpd1Dataset& data);
std::vector<std::vector<float>> predict_temporal(TemporalNet<float>& net, const Hpd1Dataset& data);
std::vector<std::vector<float>> predict_fused(FusionNet<float>& net,
                                              const std::vector<std::vector<float>>& j_temp,
                                              const std::vector<std::vector<float>>& j_spa);

}  // namespace stpose
