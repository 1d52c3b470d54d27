#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stpose/common.hpp"
#include "stpose/rng.hpp"

namespace stpose {

// One trainable array. Lives outside any tape; tapes reference this storage
// directly, so gradient contributions from every use of the parameter (shared
// layers included) accumulate into the single `grad` buffer.
template <class T>
struct Param {
  std::string name;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;

  std::size_t numel() const { return value.size(); }
};

// Ordered registry of parameters for one network. Registration order is the
// order weights are initialised in and the order arrays appear in checkpoints,
// so it is part of the reproducibility contract.
template <class T>
class ParamStore {
 public:
  Param<T>& add(std::string name, Shape shape);

  std::size_t size() const { return items_.size(); }
  Param<T>& at(std::size_t i) { return *items_[i]; }
  const Param<T>& at(std::size_t i) const { return *items_[i]; }
  Param<T>* find(const std::string& name);

  std::size_t total_numel() const;
  void zero_grad();

  // Scale every gradient in place (used to turn summed batch gradients into
  // means before the optimiser step).
  void scale_grad(T factor);

  // FNV-1a over all values in registration order; freeze checks compare this.
  std::uint64_t value_hash() const;

 private:
  std::vector<std::unique_ptr<Param<T>>> items_;
};

// Fan-in scaled uniform init, biases zero. `fan_in` conventions: conv weights
// use cin*kh*kw, fully connected and recurrent weights use their input width.
// LSTM forget-gate biases are set to 1 by the model code after this runs.
template <class T>
void init_uniform_fan_in(Param<T>& p, std::size_t fan_in, Rng& rng);

// Checkpoint container: "CADP" magic, format version, a length-prefixed UTF-8
// metadata block, then named float32 arrays. Arrays are written in the order
// given; numeric fields are little-endian. The same bytes load back exactly.
struct CheckpointArray {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::string meta;
  std::vector<CheckpointArray> arrays;

  const CheckpointArray* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot a store into checkpoint arrays (values narrowed to float32 when T
// is double) and restore it; restore requires an exact name and shape match.
template <class T>
Checkpoint to_checkpoint(const ParamStore<T>& store, std::string meta);
template <class T>
void from_checkpoint(ParamStore<T>& store, const Checkpoint& ckpt);

}  // namespace stpose
