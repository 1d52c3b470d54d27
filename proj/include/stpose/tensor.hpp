#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stpose/common.hpp"
#include "stpose/params.hpp"
#include "stpose/rng.hpp"

namespace stpose {

enum class RunMode { train, test };

template <class T>
class Tape;

// Handle to one node on a tape. Cheap to copy; invalidated by Tape::reset().
template <class T>
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  std::size_t numel() const;
  bool requires_grad() const;
  std::span<const T> value() const;
  std::span<T> mutable_value();  // for test setup on leaves
  std::span<const T> grad() const;
  Tape<T>* tape() const { return tape_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Tensor(Tape<T>* t, std::int32_t id) : tape_(t), id_(id) {}
  Tape<T>* tape_ = nullptr;
  std::int32_t id_ = -1;
};

// Records every operation eagerly: creation order is topological order, and
// backward() walks it once in reverse, accumulating gradients. Parameters are
// bound rather than copied, so their gradients land directly in Param::grad
// and shared uses of one parameter accumulate into the same storage.
template <class T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<T> leaf(Shape shape, bool requires_grad = false);
  Tensor<T> leaf(Shape shape, std::vector<T> values, bool requires_grad = false);
  // Borrow external storage for an input; the buffer must outlive the tape use.
  Tensor<T> leaf_view(Shape shape, std::span<T> values);
  // One node per parameter per generation; repeated binds return the same node.
  Tensor<T> bind(Param<T>& p);

  // Reverse accumulation from a scalar loss. Each reachable node is visited
  // exactly once; a gradient is read only after every consumer contributed
  // (enforced when accumulation checking is on).
  void backward(const Tensor<T>& loss);

  // Drop all nodes and the bind cache; parameter storage is untouched.
  void reset();

  std::size_t node_count() const { return nodes_.size(); }

  // Accumulation-order checking; defaults to on in debug builds.
  void set_check_accumulation(bool on) { check_accumulation_ = on; }

  struct NonFinite {
    std::string op;
    std::int32_t node;
  };
  // First node (creation order) holding a non-finite value, if any.
  std::optional<NonFinite> first_non_finite() const;

  // Hash over every max-pool argmax selection on the tape. Two forward passes
  // with the same signature routed identical pooling decisions; finite
  // difference checks use this to detect a crossing of a pooling tie.
  std::uint64_t pool_signature() const;

  // --- node internals, used by the op functions ---
  std::int32_t new_node(const char* op, Shape shape, std::vector<std::int32_t> parents,
                        bool requires_grad, std::span<T> external_val = {},
                        std::span<T> external_grad = {});
  void set_backward(std::int32_t id, std::function<void(Tape&)> fn);
  const Shape& shape_of(std::int32_t id) const { return nodes_[id].shape; }
  const char* op_of(std::int32_t id) const { return nodes_[id].op; }
  bool requires_grad_of(std::int32_t id) const { return nodes_[id].requires_grad; }
  std::span<T> val(std::int32_t id) { return nodes_[id].val; }
  std::span<const T> val(std::int32_t id) const { return nodes_[id].val; }
  std::span<T> grad(std::int32_t id) { return nodes_[id].grad; }
  std::vector<T>& saved(std::int32_t id) { return nodes_[id].saved; }
  std::vector<std::int32_t>& saved_idx(std::int32_t id) { return nodes_[id].saved_idx; }
  Tensor<T> handle(std::int32_t id) { return Tensor<T>(this, id); }

 private:
  struct Node {
    const char* op;
    Shape shape;
    std::span<T> val;
    std::span<T> grad;
    std::vector<T> own_val;
    std::vector<T> own_grad;
    std::vector<T> saved;
    std::vector<std::int32_t> saved_idx;
    std::vector<std::int32_t> parents;
    std::function<void(Tape&)> back;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<const Param<T>*, std::int32_t>> bind_cache_;
#ifdef NDEBUG
  bool check_accumulation_ = false;
#else
  bool check_accumulation_ = true;
#endif
};

// --- operations ---

// 2D cross-correlation, valid padding. x:[cin,h,w] w:[cout,cin,kh,kw] b:[cout]
// -> [cout, (h-kh)/stride+1, (w-kw)/stride+1].
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride);

// k x k max pooling; ties pick the lowest flat row-major input index.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x, int k, int stride);

// w:[dout,din] b:[dout]; x of any shape is read as its row-major flattening.
template <class T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// (a + b) / 2 elementwise; equal shapes.
template <class T>
Tensor<T> elementwise_mean(const Tensor<T>& a, const Tensor<T>& b);

// Concatenation along axis 0; trailing dimensions must match.
template <class T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

// scale * x + shift elementwise.
template <class T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift);

template <class T>
Tensor<T> tanh(const Tensor<T>& x);

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x);

// count elements of the flat view starting at offset; result is rank 1.
template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t offset, std::size_t count);

// Inverted dropout: train mode zeroes with probability p and scales survivors
// by 1/(1-p); test mode (or p == 0) is the identity. Draws one uniform per
// element in row-major order.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, RunMode mode, Rng& rng);

// Euclidean norm of (pred - target), a scalar node of shape [1]. At zero
// distance the gradient is defined as zero.
template <class T>
Tensor<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <class T>
struct LstmGateParams {
  // Gate order i, f, o, c; each gate has a recurrent weight [dh,dh] (wh*), an
  // input weight [dh,d] (wx*) and a bias [dh].
  Tensor<T> whi, wxi, bi;
  Tensor<T> whf, wxf, bf;
  Tensor<T> who, wxo, bo;
  Tensor<T> whc, wxc, bc;
};

template <class T>
struct LstmState {
  Tensor<T> h, c;
};

// One recurrence step:
//   i = sig(whi h + wxi phi + bi)     f = sig(whf h + wxf phi + bf)
//   o = sig(who h + wxo phi + bo)     g = tanh(whc h + wxc phi + bc)
//   c' = f*c + i*g                    h' = o * tanh(c')
template <class T>
LstmState<T> lstm_cell(const Tensor<T>& phi, const LstmState<T>& prev, const LstmGateParams<T>& p);

}  // namespace stpose
