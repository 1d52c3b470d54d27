#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stpose/params.hpp"
#include "stpose/preprocess.hpp"
#include "stpose/tensor.hpp"

namespace stpose {

// Architecture hyperparameters shared by every network. A checkpoint embeds
// this as a key=value block in its metadata so it is self-describing.
struct ArchConfig {
  int size = 64;      // M, crop resolution
  int joints = 6;     // K
  int layers = 8;     // L, slabs in the sliced volume
  int seq_len = 16;   // T, recurrent sequence length
  int conv1_out = 8;
  int conv1_k = 5;
  int conv2_out = 16;
  int conv2_k = 3;
  int pool = 2;
  int fc_dim = 256;
  int lstm_dim = 128;
  int fusion_hidden = 64;
  double dropout = 0.3;

  void validate() const;  // throws ContractError, including non-fitting conv/pool sizes

  int out_dim() const { return 3 * joints; }
  int conv1_hw() const { return size - conv1_k + 1; }
  int pool1_hw() const { return (conv1_hw() - pool) / pool + 1; }
  int conv2_hw() const { return pool1_hw() - conv2_k + 1; }
  int pool2_hw() const { return (conv2_hw() - pool) / pool + 1; }
  std::size_t encoder_flat() const {
    return static_cast<std::size_t>(conv2_out) * pool2_hw() * pool2_hw();
  }

  std::string to_text() const;
  static ArchConfig from_text(const std::string& text);

  bool operator==(const ArchConfig&) const = default;
};

// Named references into a ParamStore for one conv-conv-fc branch encoder.
template <class T>
struct EncoderRefs {
  Param<T>*c1w, *c1b, *c2w, *c2b, *fw, *fb;
};

// Two-branch frame network with deep feature fusion and parameter-shared
// auxiliary paths. The depth branch consumes the normalized crop as a
// 1-channel image, the volume branch consumes the sliced volume as an
// L-channel image. Feature merging is the element-wise mean, applied once to
// the raw branch features and again after each of the two per-branch fusion
// transforms. The auxiliary paths reuse the very same transform and head
// parameters, so their losses regularize the main path instead of growing it.
template <class T>
class SpatialNet {
 public:
  SpatialNet(const ArchConfig& arch, std::uint64_t init_seed);

  struct Forward {
    Tensor<T> main;                   // [3K]
    Tensor<T> aux_depth, aux_volume;  // [3K], train mode only
    Tensor<T> feat_depth, feat_volume, phi0, phi1, phi2;  // fusion trace for tests
  };

  // drop_rng is required in train mode when dropout > 0 and ignored otherwise.
  Forward forward(Tape<T>& tape, const std::vector<float>& depth, const SlicedVolume& volume,
                  RunMode mode, Rng* drop_rng);

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const ArchConfig& arch() const { return arch_; }

  void save(const std::string& path) const;
  static SpatialNet load(const std::string& path);

 private:
  ArchConfig arch_;
  ParamStore<T> store_;
  EncoderRefs<T> enc_d_{}, enc_v_{};
  Param<T>*h1d_w_, *h1d_b_, *h1v_w_, *h1v_b_, *h2d_w_, *h2d_b_, *h2v_w_, *h2v_b_;
  Param<T>*head1_w_, *head1_b_, *head2_w_, *head2_b_;
};

// Frame encoder shared across time steps feeding a single LSTM layer; the
// per-step prediction reads concat(h_t, phi_t) through one linear map. State
// starts at h_0 = c_0 = 0.
template <class T>
class TemporalNet {
 public:
  TemporalNet(const ArchConfig& arch, std::uint64_t init_seed);

  struct Forward {
    std::vector<Tensor<T>> preds;  // one [3K] per frame
    std::vector<Tensor<T>> h;      // hidden states, exposed for the oracle test
    std::vector<Tensor<T>> c;
  };

  // frames.size() must equal arch.seq_len; frames are time-ordered.
  Forward forward(Tape<T>& tape, const std::vector<const std::vector<float>*>& frames);

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const ArchConfig& arch() const { return arch_; }

  void save(const std::string& path) const;
  static TemporalNet load(const std::string& path);

 private:
  ArchConfig arch_;
  ParamStore<T> store_;
  EncoderRefs<T> enc_{};
  Param<T>*whi_, *wxi_, *bi_, *whf_, *wxf_, *bf_, *who_, *wxo_, *bo_, *whc_, *wxc_, *bc_;
  Param<T>*out_w_, *out_b_;
};

// Per-component confidence network: sees both predictions, emits w1 through a
// sigmoid, and combines J_out = w1*J_temp + (1-w1)*J_spa. w2 is computed as
// 1 - w1, which in IEEE arithmetic makes w1 + w2 == 1 hold exactly.
template <class T>
class FusionNet {
 public:
  FusionNet(const ArchConfig& arch, std::uint64_t init_seed);

  struct Forward {
    Tensor<T> out;  // [3K]
    Tensor<T> w1, w2;
  };

  Forward forward(Tape<T>& tape, const Tensor<T>& j_temp, const Tensor<T>& j_spa);

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const ArchConfig& arch() const { return arch_; }

  void save(const std::string& path) const;
  static FusionNet load(const std::string& path);

 private:
  ArchConfig arch_;
  ParamStore<T> store_;
  Param<T>*fc1_w_, *fc1_b_, *fc2_w_, *fc2_b_;
};

// Single-branch ablation regressors: the same encoder and head definitions as
// SpatialNet but without the cross-branch fusion, so a branch trained inside
// the spatial net can be replayed here bit-for-bit.
template <class T>
class BranchNet {
 public:
  enum class Kind { depth, volume };

  BranchNet(const ArchConfig& arch, Kind kind, std::uint64_t init_seed);

  struct Forward {
    Tensor<T> pred;  // [3K]
    Tensor<T> feat;  // [fc_dim] encoder output
  };

  Forward forward(Tape<T>& tape, const std::vector<float>& depth, RunMode mode, Rng* drop_rng);
  Forward forward(Tape<T>& tape, const SlicedVolume& volume, RunMode mode, Rng* drop_rng);

  Kind kind() const { return kind_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const ArchConfig& arch() const { return arch_; }

  void save(const std::string& path) const;
  static BranchNet load(const std::string& path);

 private:
  Forward tail(Tape<T>& tape, Tensor<T> feat, RunMode mode, Rng* drop_rng);

  ArchConfig arch_;
  Kind kind_;
  ParamStore<T> store_;
  EncoderRefs<T> enc_{};
  Param<T>*head1_w_, *head1_b_, *head2_w_, *head2_b_;
};

// Checkpoint metadata: "kind=<net>\n" followed by the ArchConfig block.
struct CheckpointInfo {
  std::string kind;
  ArchConfig arch;
};

std::string make_checkpoint_meta(const std::string& kind, const ArchConfig& arch);
CheckpointInfo parse_checkpoint_meta(const std::string& meta);

// Peek at a checkpoint on disk without loading arrays into a model.
CheckpointInfo read_checkpoint_info(const std::string& path);

// Tape inputs from stored data.
template <class T>
Tensor<T> depth_leaf(Tape<T>& tape, const std::vector<float>& depth, int size);
template <class T>
Tensor<T> volume_leaf(Tape<T>& tape, const SlicedVolume& volume);

}  // namespace stpose
