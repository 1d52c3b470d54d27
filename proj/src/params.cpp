#include "stpose/params.hpp"

#include <cmath>

#include "bytes.hpp"

namespace stpose {

template <class T>
Param<T>& ParamStore<T>::add(std::string name, Shape shape) {
  if (find(name)) throw ContractError("parameter registered twice: " + name);
  auto p = std::make_unique<Param<T>>();
  p->name = std::move(name);
  p->shape = std::move(shape);
  p->value.assign(numel(p->shape), T(0));
  p->grad.assign(p->value.size(), T(0));
  items_.push_back(std::move(p));
  return *items_.back();
}

template <class T>
Param<T>* ParamStore<T>::find(const std::string& name) {
  for (auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

template <class T>
std::size_t ParamStore<T>::total_numel() const {
  std::size_t n = 0;
  for (auto& p : items_) n += p->numel();
  return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& p : items_) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

template <class T>
void ParamStore<T>::scale_grad(T factor) {
  for (auto& p : items_)
    for (auto& g : p->grad) g *= factor;
}

template <class T>
std::uint64_t ParamStore<T>::value_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto& p : items_) h = fnv1a(p->value.data(), p->value.size() * sizeof(T), h);
  return h;
}

template <class T>
void init_uniform_fan_in(Param<T>& p, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : p.value) v = static_cast<T>(rng.uniform(-bound, bound));
}

template class ParamStore<float>;
template class ParamStore<double>;
template void init_uniform_fan_in<float>(Param<float>&, std::size_t, Rng&);
template void init_uniform_fan_in<double>(Param<double>&, std::size_t, Rng&);

// ---- checkpoint container ----

namespace {

constexpr char kMagic[4] = {'C', 'A', 'D', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

const CheckpointArray* Checkpoint::find(const std::string& name) const {
  for (auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, 4);
  bytes::put_u32(out, kFormatVersion);
  bytes::put_u32(out, static_cast<std::uint32_t>(ckpt.meta.size()));
  out.append(ckpt.meta);
  bytes::put_u32(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    if (numel(a.shape) != a.data.size())
      throw ContractError("checkpoint array " + a.name + " shape " + shape_str(a.shape) +
                          " does not match its data size");
    bytes::put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.append(a.name);
    bytes::put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (std::size_t d : a.shape) bytes::put_u64(out, d);
    for (float v : a.data) bytes::put_f32(out, v);
  }
  bytes::write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string blob = bytes::read_file(path);
  bytes::ByteReader r(blob, path);
  if (r.str(4) != std::string(kMagic, 4)) throw IoError("not a checkpoint file: " + path);
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  Checkpoint ckpt;
  ckpt.meta = r.str(r.u32());
  const std::uint32_t count = r.u32();
  ckpt.arrays.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointArray a;
    a.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    a.shape.resize(rank);
    for (auto& d : a.shape) d = r.u64();
    a.data.resize(numel(a.shape));
    for (auto& v : a.data) v = r.f32();
    ckpt.arrays.push_back(std::move(a));
  }
  if (!r.at_end()) throw IoError("trailing bytes in checkpoint: " + path);
  return ckpt;
}

template <class T>
Checkpoint to_checkpoint(const ParamStore<T>& store, std::string meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  ckpt.arrays.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Param<T>& p = store.at(i);
    CheckpointArray a;
    a.name = p.name;
    a.shape = p.shape;
    a.data.assign(p.value.begin(), p.value.end());
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

template <class T>
void from_checkpoint(ParamStore<T>& store, const Checkpoint& ckpt) {
  if (ckpt.arrays.size() != store.size())
    throw ContractError("checkpoint holds " + std::to_string(ckpt.arrays.size()) +
                        " arrays, model expects " + std::to_string(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    Param<T>& p = store.at(i);
    const CheckpointArray* a = ckpt.find(p.name);
    if (!a) throw ContractError("checkpoint is missing array " + p.name);
    if (a->shape != p.shape)
      throw ContractError("checkpoint array " + p.name + " has shape " + shape_str(a->shape) +
                          ", model expects " + shape_str(p.shape));
    p.value.assign(a->data.begin(), a->data.end());
  }
}

template Checkpoint to_checkpoint<float>(const ParamStore<float>&, std::string);
template Checkpoint to_checkpoint<double>(const ParamStore<double>&, std::string);
template void from_checkpoint<float>(ParamStore<float>&, const Checkpoint&);
template void from_checkpoint<double>(ParamStore<double>&, const Checkpoint&);

}  // namespace stpose
