#include "stpose/tensor.hpp"

#include <array>
#include <cmath>
#include <string_view>

#include "stpose/kernels.hpp"

namespace stpose {

// --- Tensor handle ---

template <class T>
const Shape& Tensor<T>::shape() const {
  return tape_->shape_of(id_);
}
template <class T>
std::size_t Tensor<T>::numel() const {
  return stpose::numel(tape_->shape_of(id_));
}
template <class T>
bool Tensor<T>::requires_grad() const {
  return tape_->requires_grad_of(id_);
}
template <class T>
std::span<const T> Tensor<T>::value() const {
  return const_cast<const Tape<T>*>(tape_)->val(id_);
}
template <class T>
std::span<T> Tensor<T>::mutable_value() {
  return tape_->val(id_);
}
template <class T>
std::span<const T> Tensor<T>::grad() const {
  return tape_->grad(id_);
}

// --- Tape ---

template <class T>
std::int32_t Tape<T>::new_node(const char* op, Shape shape, std::vector<std::int32_t> parents,
                               bool requires_grad, std::span<T> external_val,
                               std::span<T> external_grad) {
  Node n;
  n.op = op;
  n.shape = std::move(shape);
  n.parents = std::move(parents);
  n.requires_grad = requires_grad;
  const std::size_t count = stpose::numel(n.shape);
  if (external_val.empty()) {
    n.own_val.assign(count, T(0));
    n.val = std::span<T>(n.own_val);
  } else {
    if (external_val.size() != count)
      throw ContractError(std::string(op) + ": external storage size does not match shape");
    n.val = external_val;
  }
  if (requires_grad) {
    if (external_grad.empty()) {
      n.own_grad.assign(count, T(0));
      n.grad = std::span<T>(n.own_grad);
    } else {
      n.grad = external_grad;
    }
  }
  nodes_.push_back(std::move(n));
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

template <class T>
void Tape<T>::set_backward(std::int32_t id, std::function<void(Tape&)> fn) {
  nodes_[id].back = std::move(fn);
}

template <class T>
Tensor<T> Tape<T>::leaf(Shape shape, bool requires_grad) {
  return handle(new_node("leaf", std::move(shape), {}, requires_grad));
}

template <class T>
Tensor<T> Tape<T>::leaf(Shape shape, std::vector<T> values, bool requires_grad) {
  if (stpose::numel(shape) != values.size())
    throw ContractError("leaf: " + std::to_string(values.size()) + " values for shape " +
                        shape_str(shape));
  const std::int32_t id = new_node("leaf", std::move(shape), {}, requires_grad);
  nodes_[id].own_val = std::move(values);
  nodes_[id].val = std::span<T>(nodes_[id].own_val);
  return handle(id);
}

template <class T>
Tensor<T> Tape<T>::leaf_view(Shape shape, std::span<T> values) {
  return handle(new_node("leaf", std::move(shape), {}, false, values));
}

template <class T>
Tensor<T> Tape<T>::bind(Param<T>& p) {
  for (const auto& [param, id] : bind_cache_)
    if (param == &p) return handle(id);
  const std::int32_t id = new_node("param", p.shape, {}, true, std::span<T>(p.value),
                                   std::span<T>(p.grad));
  bind_cache_.emplace_back(&p, id);
  return handle(id);
}

template <class T>
void Tape<T>::reset() {
  nodes_.clear();
  bind_cache_.clear();
}

template <class T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.tape() != this) throw ContractError("backward: loss lives on a different tape");
  const std::int32_t root = loss.id();
  if (stpose::numel(nodes_[root].shape) != 1)
    throw ContractError(std::string("backward: loss has shape ") + shape_str(nodes_[root].shape) +
                        ", expected a scalar");
  if (!nodes_[root].requires_grad) return;  // nothing differentiable below

  // Reachability from the loss through parent edges.
  std::vector<unsigned char> marked(nodes_.size(), 0);
  std::vector<std::int32_t> stack{root};
  marked[root] = 1;
  while (!stack.empty()) {
    const std::int32_t id = stack.back();
    stack.pop_back();
    for (std::int32_t p : nodes_[id].parents)
      if (!marked[p]) {
        marked[p] = 1;
        stack.push_back(p);
      }
  }

  // Consumer counts among reachable nodes; the seed counts as one consumer of
  // the loss so the accumulation check covers it uniformly.
  std::vector<std::int32_t> consumers(nodes_.size(), 0);
  std::vector<std::int32_t> contribs(nodes_.size(), 0);
  for (std::size_t id = 0; id < nodes_.size(); ++id)
    if (marked[id])
      for (std::int32_t p : nodes_[id].parents) ++consumers[p];
  ++consumers[root];

  nodes_[root].grad[0] += T(1);
  ++contribs[root];

  for (std::int32_t id = root; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!marked[id] || !n.requires_grad) continue;
    if (check_accumulation_ && contribs[id] != consumers[id])
      throw ContractError(std::string("backward read node ") + n.op + "#" + std::to_string(id) +
                          " after " + std::to_string(contribs[id]) + " of " +
                          std::to_string(consumers[id]) + " consumer contributions");
    if (n.back) n.back(*this);
    for (std::int32_t p : n.parents) ++contribs[p];
  }
}

template <class T>
std::optional<typename Tape<T>::NonFinite> Tape<T>::first_non_finite() const {
  for (std::size_t id = 0; id < nodes_.size(); ++id)
    for (T v : nodes_[id].val)
      if (!std::isfinite(static_cast<double>(v)))
        return NonFinite{nodes_[id].op, static_cast<std::int32_t>(id)};
  return std::nullopt;
}

template <class T>
std::uint64_t Tape<T>::pool_signature() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Node& n : nodes_)
    if (n.op == std::string_view("maxpool2d"))
      h = fnv1a(n.saved_idx.data(), n.saved_idx.size() * sizeof(std::int32_t), h);
  return h;
}

// --- op helpers ---

namespace {

template <class T>
Tape<T>& same_tape(const char* op, std::initializer_list<const Tensor<T>*> ts) {
  Tape<T>* tape = nullptr;
  for (const Tensor<T>* t : ts) {
    if (!t->valid()) throw ContractError(std::string(op) + ": unset tensor argument");
    if (!tape) tape = t->tape();
    if (t->tape() != tape) throw ContractError(std::string(op) + ": tensors on different tapes");
  }
  return *tape;
}

template <class T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) return;
  const Shape &sa = a.shape(), &sb = b.shape();
  if (sa.size() != sb.size())
    throw ContractError(std::string(op) + ": rank " + std::to_string(sa.size()) + " vs " +
                        std::to_string(sb.size()));
  for (std::size_t ax = 0; ax < sa.size(); ++ax)
    if (sa[ax] != sb[ax])
      throw ContractError(std::string(op) + ": axis " + std::to_string(ax) + " has " +
                          std::to_string(sa[ax]) + " vs " + std::to_string(sb[ax]));
}

// Accumulate g into dst if the node wants gradients.
template <class T>
void axpy_if(std::span<T> dst, std::span<const T> g, T scale) {
  if (dst.empty()) return;
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += scale * g[i];
}

}  // namespace

// --- conv2d ---

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride) {
  Tape<T>& tape = same_tape<T>("conv2d", {&x, &w, &b});
  const Shape &xs = x.shape(), &ws = w.shape(), &bs = b.shape();
  if (xs.size() != 3) throw ContractError("conv2d: input rank " + std::to_string(xs.size()) + ", expected 3");
  if (ws.size() != 4) throw ContractError("conv2d: weight rank " + std::to_string(ws.size()) + ", expected 4");
  if (bs.size() != 1) throw ContractError("conv2d: bias rank " + std::to_string(bs.size()) + ", expected 1");
  if (xs[0] != ws[1])
    throw ContractError("conv2d: channel axis has input " + std::to_string(xs[0]) +
                        " vs weight " + std::to_string(ws[1]));
  if (ws[0] != bs[0])
    throw ContractError("conv2d: output channel axis has weight " + std::to_string(ws[0]) +
                        " vs bias " + std::to_string(bs[0]));
  if (stride < 1) throw ContractError("conv2d: stride " + std::to_string(stride) + " < 1");
  if (ws[2] > xs[1] || ws[3] > xs[2])
    throw ContractError("conv2d: kernel " + std::to_string(ws[2]) + "x" + std::to_string(ws[3]) +
                        " exceeds input " + std::to_string(xs[1]) + "x" + std::to_string(xs[2]));

  kernels::ConvDims d{static_cast<int>(xs[0]), static_cast<int>(xs[1]), static_cast<int>(xs[2]),
                      static_cast<int>(ws[0]), static_cast<int>(ws[2]), static_cast<int>(ws[3]),
                      stride};
  const bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
  const std::int32_t out = tape.new_node(
      "conv2d",
      {ws[0], static_cast<std::size_t>(d.hout()), static_cast<std::size_t>(d.wout())},
      {x.id(), w.id(), b.id()}, rg);
  kernels::conv2d_forward(d, tape.val(x.id()).data(), tape.val(w.id()).data(),
                          tape.val(b.id()).data(), tape.val(out).data());
  if (rg) {
    const std::int32_t xi = x.id(), wi = w.id(), bi = b.id();
    tape.set_backward(out, [d, xi, wi, bi, out](Tape<T>& t) {
      const T* gy = t.grad(out).data();
      if (!t.grad(xi).empty())
        kernels::conv2d_backward_input(d, gy, t.val(wi).data(), t.grad(xi).data());
      const bool want_w = !t.grad(wi).empty(), want_b = !t.grad(bi).empty();
      if (want_w || want_b) {
        std::vector<T> scratch_w, scratch_b;
        T* dw = t.grad(wi).data();
        T* db = t.grad(bi).data();
        if (!want_w) {
          scratch_w.assign(static_cast<std::size_t>(d.cout) * d.cin * d.kh * d.kw, T(0));
          dw = scratch_w.data();
        }
        if (!want_b) {
          scratch_b.assign(static_cast<std::size_t>(d.cout), T(0));
          db = scratch_b.data();
        }
        kernels::conv2d_backward_filter(d, t.val(xi).data(), gy, dw, db);
      }
    });
  }
  return tape.handle(out);
}

// --- maxpool2d ---

template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x, int k, int stride) {
  Tape<T>& tape = same_tape<T>("maxpool2d", {&x});
  const Shape& xs = x.shape();
  if (xs.size() != 3)
    throw ContractError("maxpool2d: input rank " + std::to_string(xs.size()) + ", expected 3");
  if (k < 1 || stride < 1)
    throw ContractError("maxpool2d: window " + std::to_string(k) + " stride " +
                        std::to_string(stride) + " must be positive");
  if (static_cast<std::size_t>(k) > xs[1] || static_cast<std::size_t>(k) > xs[2])
    throw ContractError("maxpool2d: window " + std::to_string(k) + " exceeds input " +
                        std::to_string(xs[1]) + "x" + std::to_string(xs[2]));

  kernels::PoolDims d{static_cast<int>(xs[0]), static_cast<int>(xs[1]), static_cast<int>(xs[2]),
                      k, stride};
  const std::int32_t out = tape.new_node(
      "maxpool2d",
      {xs[0], static_cast<std::size_t>(d.hout()), static_cast<std::size_t>(d.wout())},
      {x.id()}, x.requires_grad());
  auto& argmax = tape.saved_idx(out);
  argmax.resize(stpose::numel(tape.shape_of(out)));
  kernels::maxpool_forward(d, tape.val(x.id()).data(), tape.val(out).data(), argmax.data());
  if (x.requires_grad()) {
    const std::int32_t xi = x.id();
    tape.set_backward(out, [d, xi, out](Tape<T>& t) {
      if (t.grad(xi).empty()) return;
      kernels::maxpool_backward(d, t.grad(out).data(), t.saved_idx(out).data(), t.grad(xi).data());
    });
  }
  return tape.handle(out);
}

// --- fully_connected ---

template <class T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  Tape<T>& tape = same_tape<T>("fully_connected", {&x, &w, &b});
  const Shape &ws = w.shape(), &bs = b.shape();
  if (ws.size() != 2)
    throw ContractError("fully_connected: weight rank " + std::to_string(ws.size()) + ", expected 2");
  if (bs.size() != 1)
    throw ContractError("fully_connected: bias rank " + std::to_string(bs.size()) + ", expected 1");
  const std::size_t din = x.numel();
  if (ws[1] != din)
    throw ContractError("fully_connected: input axis has " + std::to_string(din) +
                        " elements vs weight " + std::to_string(ws[1]));
  if (ws[0] != bs[0])
    throw ContractError("fully_connected: output axis has weight " + std::to_string(ws[0]) +
                        " vs bias " + std::to_string(bs[0]));

  const int dout = static_cast<int>(ws[0]), dn = static_cast<int>(din);
  const bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
  const std::int32_t out = tape.new_node("fully_connected", {ws[0]}, {x.id(), w.id(), b.id()}, rg);
  kernels::fc_forward(dout, dn, tape.val(x.id()).data(), tape.val(w.id()).data(),
                      tape.val(b.id()).data(), tape.val(out).data());
  if (rg) {
    const std::int32_t xi = x.id(), wi = w.id(), bi = b.id();
    tape.set_backward(out, [dout, dn, xi, wi, bi, out](Tape<T>& t) {
      const T* gy = t.grad(out).data();
      if (!t.grad(xi).empty()) kernels::fc_backward_input(dout, dn, gy, t.val(wi).data(), t.grad(xi).data());
      const bool want_w = !t.grad(wi).empty(), want_b = !t.grad(bi).empty();
      if (want_w || want_b) {
        std::vector<T> scratch_w, scratch_b;
        T* dw = t.grad(wi).data();
        T* db = t.grad(bi).data();
        if (!want_w) {
          scratch_w.assign(static_cast<std::size_t>(dout) * dn, T(0));
          dw = scratch_w.data();
        }
        if (!want_b) {
          scratch_b.assign(static_cast<std::size_t>(dout), T(0));
          db = scratch_b.data();
        }
        kernels::fc_backward_params(dout, dn, t.val(xi).data(), gy, dw, db);
      }
    });
  }
  return tape.handle(out);
}

// --- elementwise ops ---

template <class T>
Tensor<T> elementwise_mean(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>& tape = same_tape<T>("elementwise_mean", {&a, &b});
  require_same_shape("elementwise_mean", a, b);
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::int32_t out = tape.new_node("elementwise_mean", a.shape(), {a.id(), b.id()}, rg);
  auto av = tape.val(a.id()), bv = tape.val(b.id()), ov = tape.val(out);
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = (av[i] + bv[i]) * T(0.5);
  if (rg) {
    const std::int32_t ai = a.id(), bi = b.id();
    tape.set_backward(out, [ai, bi, out](Tape<T>& t) {
      auto g = t.grad(out);
      axpy_if(t.grad(ai), std::span<const T>(g.data(), g.size()), T(0.5));
      axpy_if(t.grad(bi), std::span<const T>(g.data(), g.size()), T(0.5));
    });
  }
  return tape.handle(out);
}

template <class T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>& tape = same_tape<T>("concat", {&a, &b});
  const Shape &sa = a.shape(), &sb = b.shape();
  if (sa.size() != sb.size() || sa.empty())
    throw ContractError("concat: rank " + std::to_string(sa.size()) + " vs " +
                        std::to_string(sb.size()));
  for (std::size_t ax = 1; ax < sa.size(); ++ax)
    if (sa[ax] != sb[ax])
      throw ContractError("concat: axis " + std::to_string(ax) + " has " + std::to_string(sa[ax]) +
                          " vs " + std::to_string(sb[ax]));
  Shape os = sa;
  os[0] += sb[0];
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::int32_t out = tape.new_node("concat", std::move(os), {a.id(), b.id()}, rg);
  auto av = tape.val(a.id()), bv = tape.val(b.id()), ov = tape.val(out);
  std::copy(av.begin(), av.end(), ov.begin());
  std::copy(bv.begin(), bv.end(), ov.begin() + av.size());
  if (rg) {
    const std::int32_t ai = a.id(), bi = b.id();
    const std::size_t na = av.size();
    tape.set_backward(out, [ai, bi, out, na](Tape<T>& t) {
      auto g = t.grad(out);
      auto ga = t.grad(ai), gb = t.grad(bi);
      if (!ga.empty())
        for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      if (!gb.empty())
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    });
  }
  return tape.handle(out);
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>& tape = same_tape<T>("add", {&a, &b});
  require_same_shape("add", a, b);
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::int32_t out = tape.new_node("add", a.shape(), {a.id(), b.id()}, rg);
  auto av = tape.val(a.id()), bv = tape.val(b.id()), ov = tape.val(out);
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (rg) {
    const std::int32_t ai = a.id(), bi = b.id();
    tape.set_backward(out, [ai, bi, out](Tape<T>& t) {
      auto g = t.grad(out);
      axpy_if(t.grad(ai), std::span<const T>(g.data(), g.size()), T(1));
      axpy_if(t.grad(bi), std::span<const T>(g.data(), g.size()), T(1));
    });
  }
  return tape.handle(out);
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>& tape = same_tape<T>("mul", {&a, &b});
  require_same_shape("mul", a, b);
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::int32_t out = tape.new_node("mul", a.shape(), {a.id(), b.id()}, rg);
  auto av = tape.val(a.id()), bv = tape.val(b.id()), ov = tape.val(out);
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (rg) {
    const std::int32_t ai = a.id(), bi = b.id();
    tape.set_backward(out, [ai, bi, out](Tape<T>& t) {
      auto g = t.grad(out);
      auto ga = t.grad(ai), gb = t.grad(bi);
      auto av2 = t.val(ai), bv2 = t.val(bi);
      if (!ga.empty())
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      if (!gb.empty())
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    });
  }
  return tape.handle(out);
}

template <class T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift) {
  Tape<T>& tape = same_tape<T>("affine", {&x});
  const std::int32_t out = tape.new_node("affine", x.shape(), {x.id()}, x.requires_grad());
  auto xv = tape.val(x.id()), ov = tape.val(out);
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = scale * xv[i] + shift;
  if (x.requires_grad()) {
    const std::int32_t xi = x.id();
    tape.set_backward(out, [xi, out, scale](Tape<T>& t) {
      auto g = t.grad(out);
      axpy_if(t.grad(xi), std::span<const T>(g.data(), g.size()), scale);
    });
  }
  return tape.handle(out);
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  Tape<T>& tape = same_tape<T>("tanh", {&x});
  const std::int32_t out = tape.new_node("tanh", x.shape(), {x.id()}, x.requires_grad());
  auto xv = tape.val(x.id()), ov = tape.val(out);
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(xv[i]);
  if (x.requires_grad()) {
    const std::int32_t xi = x.id();
    tape.set_backward(out, [xi, out](Tape<T>& t) {
      auto g = t.grad(out);
      auto gx = t.grad(xi);
      auto ov2 = t.val(out);
      if (!gx.empty())
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (T(1) - ov2[i] * ov2[i]);
    });
  }
  return tape.handle(out);
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tape<T>& tape = same_tape<T>("sigmoid", {&x});
  const std::int32_t out = tape.new_node("sigmoid", x.shape(), {x.id()}, x.requires_grad());
  auto xv = tape.val(x.id()), ov = tape.val(out);
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const T v = xv[i];
    if (v >= T(0)) {
      ov[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      ov[i] = e / (T(1) + e);
    }
  }
  if (x.requires_grad()) {
    const std::int32_t xi = x.id();
    tape.set_backward(out, [xi, out](Tape<T>& t) {
      auto g = t.grad(out);
      auto gx = t.grad(xi);
      auto ov2 = t.val(out);
      if (!gx.empty())
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * ov2[i] * (T(1) - ov2[i]);
    });
  }
  return tape.handle(out);
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t offset, std::size_t count) {
  Tape<T>& tape = same_tape<T>("slice", {&x});
  if (offset + count > x.numel())
    throw ContractError("slice: [" + std::to_string(offset) + ", " +
                        std::to_string(offset + count) + ") exceeds " + std::to_string(x.numel()) +
                        " elements");
  const std::int32_t out = tape.new_node("slice", {count}, {x.id()}, x.requires_grad());
  auto xv = tape.val(x.id()), ov = tape.val(out);
  std::copy(xv.begin() + offset, xv.begin() + offset + count, ov.begin());
  if (x.requires_grad()) {
    const std::int32_t xi = x.id();
    tape.set_backward(out, [xi, out, offset](Tape<T>& t) {
      auto g = t.grad(out);
      auto gx = t.grad(xi);
      if (!gx.empty())
        for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
    });
  }
  return tape.handle(out);
}

template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, RunMode mode, Rng& rng) {
  Tape<T>& tape = same_tape<T>("dropout", {&x});
  if (p < 0.0 || p >= 1.0)
    throw ContractError("dropout: rate " + std::to_string(p) + " outside [0, 1)");
  const std::int32_t out = tape.new_node("dropout", x.shape(), {x.id()}, x.requires_grad());
  auto xv = tape.val(x.id()), ov = tape.val(out);
  if (mode == RunMode::test || p == 0.0) {
    std::copy(xv.begin(), xv.end(), ov.begin());
    if (x.requires_grad()) {
      const std::int32_t xi = x.id();
      tape.set_backward(out, [xi, out](Tape<T>& t) {
        auto g = t.grad(out);
        axpy_if(t.grad(xi), std::span<const T>(g.data(), g.size()), T(1));
      });
    }
    return tape.handle(out);
  }
  const T scale = T(1.0 / (1.0 - p));
  auto& mask = tape.saved_idx(out);
  mask.resize(ov.size());
  for (std::size_t i = 0; i < ov.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0 : 1;
    ov[i] = mask[i] ? xv[i] * scale : T(0);
  }
  if (x.requires_grad()) {
    const std::int32_t xi = x.id();
    tape.set_backward(out, [xi, out, scale](Tape<T>& t) {
      auto g = t.grad(out);
      auto gx = t.grad(xi);
      const auto& m = t.saved_idx(out);
      if (!gx.empty())
        for (std::size_t i = 0; i < g.size(); ++i)
          if (m[i]) gx[i] += g[i] * scale;
    });
  }
  return tape.handle(out);
}

template <class T>
Tensor<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  Tape<T>& tape = same_tape<T>("l2_loss", {&pred, &target});
  require_same_shape("l2_loss", pred, target);
  const bool rg = pred.requires_grad() || target.requires_grad();
  const std::int32_t out = tape.new_node("l2_loss", {1}, {pred.id(), target.id()}, rg);
  auto pv = tape.val(pred.id()), tv = tape.val(target.id());
  T acc = T(0);
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const T d = pv[i] - tv[i];
    acc += d * d;
  }
  tape.val(out)[0] = std::sqrt(acc);
  if (rg) {
    const std::int32_t pi = pred.id(), ti = target.id();
    tape.set_backward(out, [pi, ti, out](Tape<T>& t) {
      const T norm = t.val(out)[0];
      if (norm <= T(0)) return;  // subgradient 0 at coincident points
      const T g = t.grad(out)[0] / norm;
      auto pv2 = t.val(pi), tv2 = t.val(ti);
      auto gp = t.grad(pi), gt = t.grad(ti);
      for (std::size_t i = 0; i < pv2.size(); ++i) {
        const T d = g * (pv2[i] - tv2[i]);
        if (!gp.empty()) gp[i] += d;
        if (!gt.empty()) gt[i] -= d;
      }
    });
  }
  return tape.handle(out);
}

// --- lstm_cell ---

namespace {

template <class T>
void gate_preact(std::size_t dh, std::size_t dx, const T* wh, const T* wx, const T* b, const T* h,
                 const T* x, T* z) {
  for (std::size_t r = 0; r < dh; ++r) {
    T acc = b[r];
    const T* whr = wh + r * dh;
    for (std::size_t j = 0; j < dh; ++j) acc += whr[j] * h[j];
    const T* wxr = wx + r * dx;
    for (std::size_t j = 0; j < dx; ++j) acc += wxr[j] * x[j];
    z[r] = acc;
  }
}

template <class T>
T sigm(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

// dz is the gradient at a gate pre-activation; fold it into the gate weights,
// the recurrent/input activations and the bias.
template <class T>
void gate_backward(std::size_t dh, std::size_t dx, const T* dz, const T* h, const T* x,
                   const T* wh, const T* wx, std::span<T> gwh, std::span<T> gwx, std::span<T> gb,
                   std::span<T> gh, std::span<T> gx_acc) {
  for (std::size_t r = 0; r < dh; ++r) {
    const T d = dz[r];
    if (!gwh.empty()) {
      T* row = gwh.data() + r * dh;
      for (std::size_t j = 0; j < dh; ++j) row[j] += d * h[j];
    }
    if (!gwx.empty()) {
      T* row = gwx.data() + r * dx;
      for (std::size_t j = 0; j < dx; ++j) row[j] += d * x[j];
    }
    if (!gb.empty()) gb[r] += d;
  }
  if (!gh.empty())
    for (std::size_t j = 0; j < dh; ++j) {
      T acc = T(0);
      for (std::size_t r = 0; r < dh; ++r) acc += dz[r] * wh[r * dh + j];
      gh[j] += acc;
    }
  if (!gx_acc.empty())
    for (std::size_t j = 0; j < dx; ++j) {
      T acc = T(0);
      for (std::size_t r = 0; r < dh; ++r) acc += dz[r] * wx[r * dx + j];
      gx_acc[j] += acc;
    }
}

}  // namespace

template <class T>
LstmState<T> lstm_cell(const Tensor<T>& phi, const LstmState<T>& prev, const LstmGateParams<T>& p) {
  Tape<T>& tape = same_tape<T>("lstm_cell", {&phi, &prev.h, &prev.c, &p.whi, &p.wxi, &p.bi,
                                             &p.whf, &p.wxf, &p.bf, &p.who, &p.wxo, &p.bo, &p.whc,
                                             &p.wxc, &p.bc});
  const std::size_t dx = phi.numel();
  const std::size_t dh = prev.h.numel();
  if (prev.c.numel() != dh)
    throw ContractError("lstm_cell: state axis has h " + std::to_string(dh) + " vs c " +
                        std::to_string(prev.c.numel()));
  auto check = [&](const Tensor<T>& w, std::size_t rows, std::size_t cols, const char* name) {
    if (w.shape() != Shape{rows, cols} && !(cols == 0 && w.shape() == Shape{rows}))
      throw ContractError(std::string("lstm_cell: ") + name + " has shape " + shape_str(w.shape()) +
                          ", expected " +
                          (cols ? shape_str({rows, cols}) : shape_str(Shape{rows})));
  };
  using Named = std::pair<const Tensor<T>*, const char*>;
  const std::array<Named, 4> rec{{{&p.whi, "whi"}, {&p.whf, "whf"}, {&p.who, "who"}, {&p.whc, "whc"}}};
  const std::array<Named, 4> inp{{{&p.wxi, "wxi"}, {&p.wxf, "wxf"}, {&p.wxo, "wxo"}, {&p.wxc, "wxc"}}};
  const std::array<Named, 4> bias{{{&p.bi, "bi"}, {&p.bf, "bf"}, {&p.bo, "bo"}, {&p.bc, "bc"}}};
  for (auto [w, name] : rec) check(*w, dh, dh, name);
  for (auto [w, name] : inp) check(*w, dh, dx, name);
  for (auto [w, name] : bias) check(*w, dh, 0, name);

  const std::vector<std::int32_t> parents{
      phi.id(),   prev.h.id(), prev.c.id(), p.whi.id(), p.wxi.id(), p.bi.id(), p.whf.id(),
      p.wxf.id(), p.bf.id(),   p.who.id(),  p.wxo.id(), p.bo.id(),  p.whc.id(), p.wxc.id(),
      p.bc.id()};
  bool rg = false;
  for (std::int32_t id : parents) rg = rg || tape.requires_grad_of(id);

  const std::int32_t out = tape.new_node("lstm_cell", {2 * dh}, parents, rg);

  const T* xv = tape.val(phi.id()).data();
  const T* hv = tape.val(prev.h.id()).data();
  const T* cv = tape.val(prev.c.id()).data();
  // saved layout: i, f, o, g, tanh(c') in five dh-blocks
  auto& sv = tape.saved(out);
  sv.assign(5 * dh, T(0));
  T* gi = sv.data();
  T* gf = gi + dh;
  T* go = gf + dh;
  T* gg = go + dh;
  T* tc = gg + dh;
  std::vector<T> z(dh);
  gate_preact(dh, dx, tape.val(p.whi.id()).data(), tape.val(p.wxi.id()).data(),
              tape.val(p.bi.id()).data(), hv, xv, z.data());
  for (std::size_t r = 0; r < dh; ++r) gi[r] = sigm(z[r]);
  gate_preact(dh, dx, tape.val(p.whf.id()).data(), tape.val(p.wxf.id()).data(),
              tape.val(p.bf.id()).data(), hv, xv, z.data());
  for (std::size_t r = 0; r < dh; ++r) gf[r] = sigm(z[r]);
  gate_preact(dh, dx, tape.val(p.who.id()).data(), tape.val(p.wxo.id()).data(),
              tape.val(p.bo.id()).data(), hv, xv, z.data());
  for (std::size_t r = 0; r < dh; ++r) go[r] = sigm(z[r]);
  gate_preact(dh, dx, tape.val(p.whc.id()).data(), tape.val(p.wxc.id()).data(),
              tape.val(p.bc.id()).data(), hv, xv, z.data());
  for (std::size_t r = 0; r < dh; ++r) gg[r] = std::tanh(z[r]);

  auto ov = tape.val(out);
  for (std::size_t r = 0; r < dh; ++r) {
    const T c_new = gf[r] * cv[r] + gi[r] * gg[r];
    tc[r] = std::tanh(c_new);
    ov[r] = go[r] * tc[r];       // h'
    ov[dh + r] = c_new;          // c'
  }

  if (rg) {
    std::vector<std::int32_t> ids = parents;
    tape.set_backward(out, [ids, out, dh, dx](Tape<T>& t) {
      const std::int32_t phi_i = ids[0], h_i = ids[1], c_i = ids[2];
      const std::int32_t whi = ids[3], wxi = ids[4], bi = ids[5];
      const std::int32_t whf = ids[6], wxf = ids[7], bf = ids[8];
      const std::int32_t who = ids[9], wxo = ids[10], bo = ids[11];
      const std::int32_t whc = ids[12], wxc = ids[13], bc = ids[14];
      auto g = t.grad(out);
      const auto& sv2 = t.saved(out);
      const T* gi2 = sv2.data();
      const T* gf2 = gi2 + dh;
      const T* go2 = gf2 + dh;
      const T* gg2 = go2 + dh;
      const T* tc2 = gg2 + dh;
      const T* cv2 = t.val(c_i).data();
      const T* hv2 = t.val(h_i).data();
      const T* xv2 = t.val(phi_i).data();

      std::vector<T> dzi(dh), dzf(dh), dzo(dh), dzc(dh);
      auto gc_prev = t.grad(c_i);
      for (std::size_t r = 0; r < dh; ++r) {
        const T dh_r = g[r];
        const T dc_total = g[dh + r] + dh_r * go2[r] * (T(1) - tc2[r] * tc2[r]);
        const T do_r = dh_r * tc2[r];
        dzo[r] = do_r * go2[r] * (T(1) - go2[r]);
        dzf[r] = dc_total * cv2[r] * gf2[r] * (T(1) - gf2[r]);
        dzi[r] = dc_total * gg2[r] * gi2[r] * (T(1) - gi2[r]);
        dzc[r] = dc_total * gi2[r] * (T(1) - gg2[r] * gg2[r]);
        if (!gc_prev.empty()) gc_prev[r] += dc_total * gf2[r];
      }
      gate_backward(dh, dx, dzi.data(), hv2, xv2, t.val(whi).data(), t.val(wxi).data(),
                    t.grad(whi), t.grad(wxi), t.grad(bi), t.grad(h_i), t.grad(phi_i));
      gate_backward(dh, dx, dzf.data(), hv2, xv2, t.val(whf).data(), t.val(wxf).data(),
                    t.grad(whf), t.grad(wxf), t.grad(bf), t.grad(h_i), t.grad(phi_i));
      gate_backward(dh, dx, dzo.data(), hv2, xv2, t.val(who).data(), t.val(wxo).data(),
                    t.grad(who), t.grad(wxo), t.grad(bo), t.grad(h_i), t.grad(phi_i));
      gate_backward(dh, dx, dzc.data(), hv2, xv2, t.val(whc).data(), t.val(wxc).data(),
                    t.grad(whc), t.grad(wxc), t.grad(bc), t.grad(h_i), t.grad(phi_i));
    });
  }

  LstmState<T> next;
  next.h = slice(tape.handle(out), 0, dh);
  next.c = slice(tape.handle(out), dh, dh);
  return next;
}

// --- explicit instantiations ---

#define STPOSE_INSTANTIATE_TAPE(T)                                                             \
  template class Tensor<T>;                                                                    \
  template class Tape<T>;                                                                      \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);     \
  template Tensor<T> maxpool2d<T>(const Tensor<T>&, int, int);                                 \
  template Tensor<T> fully_connected<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> elementwise_mean<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> concat<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> affine<T>(const Tensor<T>&, T, T);                                        \
  template Tensor<T> tanh<T>(const Tensor<T>&);                                                \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                             \
  template Tensor<T> slice<T>(const Tensor<T>&, std::size_t, std::size_t);                     \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, RunMode, Rng&);                      \
  template Tensor<T> l2_loss<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template LstmState<T> lstm_cell<T>(const Tensor<T>&, const LstmState<T>&, const LstmGateParams<T>&);

STPOSE_INSTANTIATE_TAPE(float)
STPOSE_INSTANTIATE_TAPE(double)

}  // namespace stpose
