#include "stpose/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "stpose/adam.hpp"
#include "stpose/eval.hpp"
#include "stpose/preprocess.hpp"
#include "stpose/textio.hpp"

namespace stpose {

// ---- config ----

void TrainConfig::validate() const {
  if (batch_size < 1) throw ContractError("train config: batch_size must be at least 1");
  if (!(lr > 0)) throw ContractError("train config: lr must be positive");
  if (lr_decay_every < 1) throw ContractError("train config: lr_decay_every must be positive");
  if (!(lr_decay_factor > 0 && lr_decay_factor <= 1))
    throw ContractError("train config: lr_decay_factor must lie in (0, 1]");
  if (iters_stage_spatial < 0 || iters_stage_temporal < 0 || iters_stage_fusion < 0)
    throw ContractError("train config: iteration counts cannot be negative");
  if (seq_len < 1) throw ContractError("train config: T must be at least 1");
  if (!(cube_mm > 0)) throw ContractError("train config: cube_mm must be positive");
}

std::string TrainConfig::to_text() const {
  std::string s;
  auto put = [&](const char* k, const std::string& v) { s += std::string(k) + "=" + v + "\n"; };
  put("batch_size", std::to_string(batch_size));
  put("lr", format_double(lr));
  put("lr_decay_every", std::to_string(lr_decay_every));
  put("lr_decay_factor", format_double(lr_decay_factor));
  put("iters_stage_spatial", std::to_string(iters_stage_spatial));
  put("iters_stage_temporal", std::to_string(iters_stage_temporal));
  put("iters_stage_fusion", std::to_string(iters_stage_fusion));
  put("seed", std::to_string(seed));
  put("T", std::to_string(seq_len));
  put("augment", augment ? "true" : "false");
  put("cube_mm", format_double(cube_mm));
  return s;
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig c;
  for (const auto& [k, v] : parse_kv_text(text)) {
    if (k == "batch_size") c.batch_size = static_cast<int>(parse_ll(v, k));
    else if (k == "lr") c.lr = parse_double(v, k);
    else if (k == "lr_decay_every") c.lr_decay_every = static_cast<int>(parse_ll(v, k));
    else if (k == "lr_decay_factor") c.lr_decay_factor = parse_double(v, k);
    else if (k == "iters_stage_spatial") c.iters_stage_spatial = static_cast<int>(parse_ll(v, k));
    else if (k == "iters_stage_temporal") c.iters_stage_temporal = static_cast<int>(parse_ll(v, k));
    else if (k == "iters_stage_fusion") c.iters_stage_fusion = static_cast<int>(parse_ll(v, k));
    else if (k == "seed") c.seed = static_cast<std::uint64_t>(parse_ll(v, k));
    else if (k == "T") c.seq_len = static_cast<int>(parse_ll(v, k));
    else if (k == "augment") {
      if (v == "true" || v == "1") c.augment = true;
      else if (v == "false" || v == "0") c.augment = false;
      else throw ContractError("train config: augment must be true or false, got '" + v + "'");
    } else if (k == "cube_mm") c.cube_mm = parse_double(v, k);
    else throw ContractError("unknown train config key: " + k);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::string text;
  for (const auto& [k, v] : read_kv_file(path)) text += k + "=" + v + "\n";
  return from_text(text);
}

double lr_schedule(int iter, const TrainConfig& cfg) {
  if (iter < 0) throw ContractError("lr_schedule: negative iteration");
  return cfg.lr * std::pow(cfg.lr_decay_factor, iter / cfg.lr_decay_every);
}

void write_train_log_csv(const std::string& path, const TrainLog& log) {
  std::vector<std::vector<std::string>> rows;
  for (const TrainLogRow& r : log.rows)
    rows.push_back({std::to_string(r.iter), r.stage, format_double(r.loss), format_double(r.lr)});
  write_csv(path, "iter,stage,loss,lr", rows);
}

// ---- dataset plumbing ----

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> split_sequences(
    const Hpd1Dataset& data) {
  std::set<std::uint32_t> ids;
  for (const auto& fr : data.frames) ids.insert(fr.seq);
  std::vector<std::uint32_t> sorted(ids.begin(), ids.end());
  const std::size_t n_val = sorted.size() / 10;
  std::vector<std::uint32_t> train(sorted.begin(), sorted.end() - n_val);
  std::vector<std::uint32_t> val(sorted.end() - n_val, sorted.end());
  return {std::move(train), std::move(val)};
}

namespace {

AugmentOp frame_augment_op(std::uint64_t seed, std::uint64_t key_tag, std::uint64_t index) {
  Rng rng = Rng::substream(seed, key_tag + index);
  return random_augment_op(rng);
}

void apply_augment_to_sample(std::vector<float>& depth, std::vector<float>& pose, int size,
                             int joints, AugmentOp op) {
  DepthFrame df;
  df.size = size;
  df.values = std::move(depth);
  augment_frame(df, op);
  depth = std::move(df.values);

  HandPose hp;
  hp.joints = joints;
  hp.xyz.assign(pose.begin(), pose.end());
  augment_pose(hp, op);
  for (std::size_t i = 0; i < pose.size(); ++i) pose[i] = static_cast<float>(hp.xyz[i]);
}

}  // namespace

FrameSample materialize_frame(const Hpd1Dataset& data, std::size_t frame_idx, bool augmented,
                              std::uint64_t seed) {
  if (frame_idx >= data.frames.size()) throw ContractError("materialize_frame: index out of range");
  const Hpd1Frame& fr = data.frames[frame_idx];
  FrameSample s{fr.depth, fr.pose};
  if (augmented)
    apply_augment_to_sample(s.depth, s.pose, data.size, data.joints,
                            frame_augment_op(seed, Rng::tag("aug"), frame_idx));
  return s;
}

namespace {

// Seed-determined epoch shuffles: the visit order depends on (seed, epoch
// index) and the sample count, never on how samples were handed in. Batches do
// not span epoch boundaries.
class EpochStream {
 public:
  EpochStream(std::size_t n, std::uint64_t seed, const char* name)
      : n_(n), seed_(seed), tag_(Rng::tag(name)) {}

  std::vector<std::size_t> take(std::size_t want, bool* completed_epoch) {
    *completed_epoch = false;
    if (cursor_ == order_.size()) {
      if (!order_.empty()) *completed_epoch = true;
      Rng rng = Rng::substream(seed_, tag_ + epoch_);
      order_.resize(n_);
      for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
      rng.shuffle(order_.begin(), order_.end());
      cursor_ = 0;
      ++epoch_;
    }
    const std::size_t got = std::min(want, order_.size() - cursor_);
    std::vector<std::size_t> batch(order_.begin() + cursor_, order_.begin() + cursor_ + got);
    cursor_ += got;
    return batch;
  }

 private:
  std::size_t n_, cursor_ = 0;
  std::uint64_t seed_, tag_, epoch_ = 0;
  std::vector<std::size_t> order_;
};

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

template <class TapeT>
void ensure_finite(TapeT& tape, double loss, const char* stage, int iter) {
  if (std::isfinite(loss)) return;
  std::string where = "no non-finite tensor found";
  if (auto nf = tape.first_non_finite())
    where = std::string("first non-finite tensor: ") + nf->op + "#" + std::to_string(nf->node);
  throw ContractError(std::string(stage) + " stage iteration " + std::to_string(iter) +
                      ": loss is not finite; " + where);
}

// mm-space average error of normalized prediction/target pairs; the shared
// cube centre drops out of every distance.
double avg_error_mm(const std::vector<std::vector<float>>& preds,
                    const std::vector<const std::vector<float>*>& targets, int joints,
                    double cube_mm) {
  PredictionSet set;
  set.joints = joints;
  const double half = cube_mm / 2;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::vector<double> p(preds[i].size()), t(targets[i]->size());
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = preds[i][j] * half;
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = (*targets[i])[j] * half;
    set.pred.push_back(std::move(p));
    set.truth.push_back(std::move(t));
  }
  return average_error(set);
}

ArchConfig arch_for_data(const Hpd1Dataset& data, const TrainConfig& cfg,
                         const ArchConfig* base) {
  ArchConfig a = base ? *base : ArchConfig{};
  a.size = data.size;
  a.joints = data.joints;
  a.layers = data.layers;
  a.seq_len = cfg.seq_len;
  a.validate();
  return a;
}

std::vector<std::size_t> frames_of_sequences(const Hpd1Dataset& data,
                                             const std::vector<std::uint32_t>& seq_ids) {
  std::set<std::uint32_t> wanted(seq_ids.begin(), seq_ids.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.frames.size(); ++i)
    if (wanted.count(data.frames[i].seq)) out.push_back(i);
  return out;
}

// Runs of exactly `t_len` consecutive frames within each listed sequence;
// leftovers are counted, not trained on.
std::vector<std::vector<std::size_t>> chunk_sequences(const Hpd1Dataset& data,
                                                      const std::vector<std::uint32_t>& seq_ids,
                                                      int t_len, int* skipped) {
  std::set<std::uint32_t> wanted(seq_ids.begin(), seq_ids.end());
  std::vector<std::vector<std::size_t>> chunks;
  for (auto [begin, end] : data.sequence_ranges()) {
    if (!wanted.count(data.frames[begin].seq)) continue;
    std::size_t pos = begin;
    while (end - pos >= static_cast<std::size_t>(t_len)) {
      std::vector<std::size_t> chunk(t_len);
      for (int i = 0; i < t_len; ++i) chunk[i] = pos + i;
      chunks.push_back(std::move(chunk));
      pos += t_len;
    }
    if (pos != end && skipped) ++*skipped;
  }
  return chunks;
}

}  // namespace

// ---- spatial stage ----

SpatialTrainResult train_spatial(const Hpd1Dataset& data, const TrainConfig& cfg,
                                 const ArchConfig* arch_base) {
  cfg.validate();
  data.validate();
  if (data.frames.empty()) throw ContractError("spatial stage: dataset is empty");
  const ArchConfig arch = arch_for_data(data, cfg, arch_base);

  SpatialNet<float> net(arch, cfg.seed);
  Adam<float> opt(net.params(), {});
  Rng drop_rng = Rng::substream(cfg.seed, Rng::tag("dropout"));

  auto [train_ids, val_ids] = split_sequences(data);
  const std::vector<std::size_t> train_frames = frames_of_sequences(data, train_ids);
  const std::vector<std::size_t> val_frames = frames_of_sequences(data, val_ids);
  if (train_frames.empty()) throw ContractError("spatial stage: no training frames after split");

  // effective sample list: every source frame, then its augmented copy
  struct Entry {
    std::size_t frame;
    bool aug;
  };
  std::vector<Entry> samples;
  for (std::size_t f : train_frames) samples.push_back({f, false});
  if (cfg.augment)
    for (std::size_t f : train_frames) samples.push_back({f, true});

  const std::size_t dim = static_cast<std::size_t>(arch.out_dim());
  auto val_error = [&]() -> double {
    std::vector<std::vector<float>> preds;
    std::vector<const std::vector<float>*> targets;
    for (std::size_t f : val_frames) {
      const Hpd1Frame& fr = data.frames[f];
      DepthFrame df;
      df.size = data.size;
      df.values = fr.depth;
      const SlicedVolume vol = slice_volume(df, data.layers);
      Tape<float> tape;
      auto fw = net.forward(tape, fr.depth, vol, RunMode::test, nullptr);
      preds.emplace_back(fw.main.value().begin(), fw.main.value().end());
      targets.push_back(&fr.pose);
    }
    return avg_error_mm(preds, targets, data.joints, cfg.cube_mm);
  };

  TrainLog log;
  Timer timer;
  EpochStream stream(samples.size(), cfg.seed, "epoch.spatial");
  for (int it = 0; it < cfg.iters_stage_spatial; ++it) {
    bool completed = false;
    const std::vector<std::size_t> batch = stream.take(cfg.batch_size, &completed);
    if (completed && !val_frames.empty())
      log.rows.push_back({it, "spatial_val", val_error(), lr_schedule(it, cfg)});

    net.params().zero_grad();
    double batch_loss = 0;
    for (std::size_t s : batch) {
      const Entry e = samples[s];
      FrameSample ms = materialize_frame(data, e.frame, e.aug, cfg.seed);
      DepthFrame df;
      df.size = data.size;
      df.values = std::move(ms.depth);
      const SlicedVolume vol = slice_volume(df, data.layers);

      Tape<float> tape;
      auto fw = net.forward(tape, df.values, vol, RunMode::train, &drop_rng);
      Tensor<float> target = tape.leaf({dim}, std::vector<float>(ms.pose.begin(), ms.pose.end()));
      Tensor<float> loss = add(add(l2_loss(fw.main, target), l2_loss(fw.aux_depth, target)),
                               l2_loss(fw.aux_volume, target));
      const double lv = loss.value()[0];
      ensure_finite(tape, lv, "spatial", it);
      batch_loss += lv;
      tape.backward(loss);
    }
    net.params().scale_grad(1.0f / static_cast<float>(batch.size()));
    const double lr = lr_schedule(it, cfg);
    opt.update(lr);
    log.rows.push_back({it, "spatial", batch_loss / static_cast<double>(batch.size()), lr});
  }
  if (!val_frames.empty())
    log.rows.push_back({cfg.iters_stage_spatial, "spatial_val", val_error(),
                        lr_schedule(cfg.iters_stage_spatial, cfg)});
  log.wall_seconds = timer.seconds();
  return {std::move(net), std::move(log)};
}

// ---- temporal stage ----

TemporalTrainResult train_temporal(const Hpd1Dataset& data, const TrainConfig& cfg,
                                   const ArchConfig* arch_base) {
  cfg.validate();
  data.validate();
  if (data.frames.empty()) throw ContractError("temporal stage: dataset is empty");
  const ArchConfig arch = arch_for_data(data, cfg, arch_base);

  TemporalNet<float> net(arch, cfg.seed);
  Adam<float> opt(net.params(), {});

  auto [train_ids, val_ids] = split_sequences(data);
  TrainLog log;
  std::vector<std::vector<std::size_t>> chunks =
      chunk_sequences(data, train_ids, cfg.seq_len, &log.short_sequences_skipped);
  std::vector<std::vector<std::size_t>> val_chunks =
      chunk_sequences(data, val_ids, cfg.seq_len, nullptr);
  if (chunks.empty())
    throw ContractError("temporal stage: no full sequences of length " +
                        std::to_string(cfg.seq_len) + " to train on");

  struct Entry {
    std::size_t chunk;
    bool aug;
  };
  std::vector<Entry> samples;
  for (std::size_t c = 0; c < chunks.size(); ++c) samples.push_back({c, false});
  if (cfg.augment)
    for (std::size_t c = 0; c < chunks.size(); ++c) samples.push_back({c, true});

  const std::size_t dim = static_cast<std::size_t>(arch.out_dim());

  // one augmentation op per chunk copy: a rigid motion of the whole sequence
  auto materialize_chunk = [&](std::size_t chunk_id, bool aug) {
    std::vector<FrameSample> frames;
    const AugmentOp op = aug ? frame_augment_op(cfg.seed, Rng::tag("aug.seq"), chunk_id)
                             : AugmentOp::rot90;  // unused
    for (std::size_t f : chunks[chunk_id]) {
      FrameSample s{data.frames[f].depth, data.frames[f].pose};
      if (aug) apply_augment_to_sample(s.depth, s.pose, data.size, data.joints, op);
      frames.push_back(std::move(s));
    }
    return frames;
  };

  auto val_error = [&]() -> double {
    std::vector<std::vector<float>> preds;
    std::vector<const std::vector<float>*> targets;
    for (const auto& chunk : val_chunks) {
      std::vector<const std::vector<float>*> frames;
      for (std::size_t f : chunk) frames.push_back(&data.frames[f].depth);
      Tape<float> tape;
      auto fw = net.forward(tape, frames);
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        preds.emplace_back(fw.preds[i].value().begin(), fw.preds[i].value().end());
        targets.push_back(&data.frames[chunk[i]].pose);
      }
    }
    return avg_error_mm(preds, targets, data.joints, cfg.cube_mm);
  };

  Timer timer;
  EpochStream stream(samples.size(), cfg.seed, "epoch.temporal");
  for (int it = 0; it < cfg.iters_stage_temporal; ++it) {
    bool completed = false;
    const std::vector<std::size_t> batch = stream.take(cfg.batch_size, &completed);
    if (completed && !val_chunks.empty())
      log.rows.push_back({it, "temporal_val", val_error(), lr_schedule(it, cfg)});

    net.params().zero_grad();
    double batch_loss = 0;
    for (std::size_t s : batch) {
      const Entry e = samples[s];
      const std::vector<FrameSample> frames = materialize_chunk(e.chunk, e.aug);
      std::vector<const std::vector<float>*> depth_ptrs;
      for (const FrameSample& fs : frames) depth_ptrs.push_back(&fs.depth);

      Tape<float> tape;
      auto fw = net.forward(tape, depth_ptrs);
      Tensor<float> loss;
      for (std::size_t t = 0; t < frames.size(); ++t) {
        Tensor<float> target =
            tape.leaf({dim}, std::vector<float>(frames[t].pose.begin(), frames[t].pose.end()));
        Tensor<float> term = l2_loss(fw.preds[t], target);
        loss = t == 0 ? term : add(loss, term);
      }
      loss = affine(loss, 1.0f / static_cast<float>(frames.size()), 0.0f);
      const double lv = loss.value()[0];
      ensure_finite(tape, lv, "temporal", it);
      batch_loss += lv;
      tape.backward(loss);
    }
    net.params().scale_grad(1.0f / static_cast<float>(batch.size()));
    const double lr = lr_schedule(it, cfg);
    opt.update(lr);
    log.rows.push_back({it, "temporal", batch_loss / static_cast<double>(batch.size()), lr});
  }
  if (!val_chunks.empty())
    log.rows.push_back({cfg.iters_stage_temporal, "temporal_val", val_error(),
                        lr_schedule(cfg.iters_stage_temporal, cfg)});
  log.wall_seconds = timer.seconds();
  return {std::move(net), std::move(log)};
}

// ---- fusion stage ----

TrainLog train_fusion_on_predictions(FusionNet<float>& net, const std::vector<FusionSample>& train,
                                     const std::vector<FusionSample>& val, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ContractError("fusion stage: no training samples");
  const std::size_t dim = static_cast<std::size_t>(net.arch().out_dim());
  for (const FusionSample& s : train)
    if (s.j_temp.size() != dim || s.j_spa.size() != dim || s.target.size() != dim)
      throw ContractError("fusion stage: sample width does not match the model");

  Adam<float> opt(net.params(), {});

  auto val_error = [&]() -> double {
    std::vector<std::vector<float>> preds;
    std::vector<const std::vector<float>*> targets;
    for (const FusionSample& s : val) {
      Tape<float> tape;
      Tensor<float> jt = tape.leaf({dim}, s.j_temp);
      Tensor<float> js = tape.leaf({dim}, s.j_spa);
      auto fw = net.forward(tape, jt, js);
      preds.emplace_back(fw.out.value().begin(), fw.out.value().end());
      targets.push_back(&s.target);
    }
    return avg_error_mm(preds, targets, static_cast<int>(dim / 3), cfg.cube_mm);
  };

  TrainLog log;
  Timer timer;
  EpochStream stream(train.size(), cfg.seed, "epoch.fusion");
  for (int it = 0; it < cfg.iters_stage_fusion; ++it) {
    bool completed = false;
    const std::vector<std::size_t> batch = stream.take(cfg.batch_size, &completed);
    if (completed && !val.empty())
      log.rows.push_back({it, "fusion_val", val_error(), lr_schedule(it, cfg)});

    net.params().zero_grad();
    double batch_loss = 0;
    for (std::size_t s : batch) {
      const FusionSample& fs = train[s];
      Tape<float> tape;
      Tensor<float> jt = tape.leaf({dim}, fs.j_temp);
      Tensor<float> js = tape.leaf({dim}, fs.j_spa);
      auto fw = net.forward(tape, jt, js);
      Tensor<float> target = tape.leaf({dim}, fs.target);
      Tensor<float> loss = l2_loss(fw.out, target);
      const double lv = loss.value()[0];
      ensure_finite(tape, lv, "fusion", it);
      batch_loss += lv;
      tape.backward(loss);
    }
    net.params().scale_grad(1.0f / static_cast<float>(batch.size()));
    const double lr = lr_schedule(it, cfg);
    opt.update(lr);
    log.rows.push_back({it, "fusion", batch_loss / static_cast<double>(batch.size()), lr});
  }
  if (!val.empty())
    log.rows.push_back({cfg.iters_stage_fusion, "fusion_val", val_error(),
                        lr_schedule(cfg.iters_stage_fusion, cfg)});
  log.wall_seconds = timer.seconds();
  return log;
}

namespace {

// Frozen-upstream predictions for one chunk of frames, optionally under one
// shared augmentation op.
std::vector<FusionSample> chunk_predictions(SpatialNet<float>& spatial, TemporalNet<float>& temporal,
                                            const Hpd1Dataset& data,
                                            const std::vector<std::size_t>& chunk, bool aug,
                                            AugmentOp op) {
  std::vector<FrameSample> frames;
  for (std::size_t f : chunk) {
    FrameSample s{data.frames[f].depth, data.frames[f].pose};
    if (aug) apply_augment_to_sample(s.depth, s.pose, data.size, data.joints, op);
    frames.push_back(std::move(s));
  }

  std::vector<const std::vector<float>*> depth_ptrs;
  for (const FrameSample& fs : frames) depth_ptrs.push_back(&fs.depth);
  Tape<float> ttape;
  auto tf = temporal.forward(ttape, depth_ptrs);

  std::vector<FusionSample> out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    DepthFrame df;
    df.size = data.size;
    df.values = frames[i].depth;
    const SlicedVolume vol = slice_volume(df, data.layers);
    Tape<float> stape;
    auto sf = spatial.forward(stape, frames[i].depth, vol, RunMode::test, nullptr);

    FusionSample fs;
    fs.j_temp.assign(tf.preds[i].value().begin(), tf.preds[i].value().end());
    fs.j_spa.assign(sf.main.value().begin(), sf.main.value().end());
    fs.target = frames[i].pose;
    out.push_back(std::move(fs));
  }
  return out;
}

}  // namespace

FusionTrainResult train_fusion(const Hpd1Dataset& data, const TrainConfig& cfg,
                               SpatialNet<float>& spatial, TemporalNet<float>& temporal,
                               const ArchConfig* arch_base) {
  cfg.validate();
  data.validate();
  if (spatial.arch().size != data.size || spatial.arch().layers != data.layers ||
      spatial.arch().joints != data.joints)
    throw ContractError("fusion stage: spatial checkpoint does not match the dataset dimensions");
  if (temporal.arch().size != data.size || temporal.arch().joints != data.joints)
    throw ContractError("fusion stage: temporal checkpoint does not match the dataset dimensions");

  const int t_len = temporal.arch().seq_len;
  auto [train_ids, val_ids] = split_sequences(data);
  int skipped = 0;
  const auto chunks = chunk_sequences(data, train_ids, t_len, &skipped);
  const auto val_chunks = chunk_sequences(data, val_ids, t_len, nullptr);
  if (chunks.empty())
    throw ContractError("fusion stage: no full sequences of length " + std::to_string(t_len));

  std::vector<FusionSample> train_samples, val_samples;
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    auto plain = chunk_predictions(spatial, temporal, data, chunks[c], false, AugmentOp::rot90);
    train_samples.insert(train_samples.end(), plain.begin(), plain.end());
  }
  if (cfg.augment) {
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      const AugmentOp op = frame_augment_op(cfg.seed, Rng::tag("aug.seq"), c);
      auto augd = chunk_predictions(spatial, temporal, data, chunks[c], true, op);
      train_samples.insert(train_samples.end(), augd.begin(), augd.end());
    }
  }
  for (const auto& chunk : val_chunks) {
    auto plain = chunk_predictions(spatial, temporal, data, chunk, false, AugmentOp::rot90);
    val_samples.insert(val_samples.end(), plain.begin(), plain.end());
  }

  ArchConfig arch = spatial.arch();
  if (arch_base) arch.fusion_hidden = arch_base->fusion_hidden;
  FusionNet<float> net(arch, cfg.seed);
  TrainLog log = train_fusion_on_predictions(net, train_samples, val_samples, cfg);
  log.short_sequences_skipped = skipped;
  return {std::move(net), std::move(log)};
}

// ---- dataset-level prediction ----

std::vector<std::vector<float>> predict_spatial(SpatialNet<float>& net, const Hpd1Dataset& data) {
  data.validate();
  if (net.arch().size != data.size || net.arch().layers != data.layers ||
      net.arch().joints != data.joints)
    throw ContractError("predict: spatial model does not match the dataset dimensions");
  std::vector<std::vector<float>> out;
  for (const Hpd1Frame& fr : data.frames) {
    DepthFrame df;
    df.size = data.size;
    df.values = fr.depth;
    const SlicedVolume vol = slice_volume(df, data.layers);
    Tape<float> tape;
    auto fw = net.forward(tape, fr.depth, vol, RunMode::test, nullptr);
    out.emplace_back(fw.main.value().begin(), fw.main.value().end());
  }
  return out;
}

std::vector<std::vector<float>> predict_temporal(TemporalNet<float>& net, const Hpd1Dataset& data) {
  data.validate();
  if (net.arch().size != data.size || net.arch().joints != data.joints)
    throw ContractError("predict: temporal model does not match the dataset dimensions");
  const int t_len = net.arch().seq_len;
  std::vector<std::vector<float>> out;
  for (auto [begin, end] : data.sequence_ranges()) {
    const std::size_t len = end - begin;
    if (len % static_cast<std::size_t>(t_len) != 0)
      throw ContractError("predict: sequence " + std::to_string(data.frames[begin].seq) + " has " +
                          std::to_string(len) + " frames, not a multiple of T=" +
                          std::to_string(t_len));
    for (std::size_t pos = begin; pos < end; pos += t_len) {
      std::vector<const std::vector<float>*> frames;
      for (int i = 0; i < t_len; ++i) frames.push_back(&data.frames[pos + i].depth);
      Tape<float> tape;
      auto fw = net.forward(tape, frames);
      for (int i = 0; i < t_len; ++i)
        out.emplace_back(fw.preds[i].value().begin(), fw.preds[i].value().end());
    }
  }
  return out;
}

std::vector<std::vector<float>> predict_fused(FusionNet<float>& net,
                                              const std::vector<std::vector<float>>& j_temp,
                                              const std::vector<std::vector<float>>& j_spa) {
  if (j_temp.size() != j_spa.size())
    throw ContractError("predict: fused inputs differ in frame count");
  const std::size_t dim = static_cast<std::size_t>(net.arch().out_dim());
  std::vector<std::vector<float>> out;
  for (std::size_t i = 0; i < j_temp.size(); ++i) {
    if (j_temp[i].size() != dim || j_spa[i].size() != dim)
      throw ContractError("predict: fused input width does not match the model");
    Tape<float> tape;
    Tensor<float> jt = tape.leaf({dim}, j_temp[i]);
    Tensor<float> js = tape.leaf({dim}, j_spa[i]);
    auto fw = net.forward(tape, jt, js);
    out.emplace_back(fw.out.value().begin(), fw.out.value().end());
  }
  return out;
}

}  // namespace stpose
