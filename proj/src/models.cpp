#include "stpose/models.hpp"

#include <algorithm>

#include "stpose/textio.hpp"

namespace stpose {

// ---- architecture config ----

void ArchConfig::validate() const {
  if (size < 4) throw ContractError("arch: size must be at least 4");
  if (joints < 1) throw ContractError("arch: joints must be at least 1");
  if (layers < 1) throw ContractError("arch: layers must be at least 1");
  if (seq_len < 1) throw ContractError("arch: seq_len must be at least 1");
  if (conv1_out < 1 || conv2_out < 1) throw ContractError("arch: conv channel counts must be positive");
  if (conv1_k < 1 || conv2_k < 1) throw ContractError("arch: conv kernel sizes must be positive");
  if (pool < 1) throw ContractError("arch: pool must be positive");
  if (fc_dim < 1 || lstm_dim < 1 || fusion_hidden < 1)
    throw ContractError("arch: layer widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("arch: dropout must lie in [0, 1)");

  if (conv1_hw() < 1)
    throw ContractError("arch: conv1 kernel " + std::to_string(conv1_k) +
                        " does not fit input size " + std::to_string(size));
  if (conv1_hw() < pool || (conv1_hw() - pool) % pool != 0)
    throw ContractError("arch: pool " + std::to_string(pool) + " does not tile conv1 output " +
                        std::to_string(conv1_hw()));
  if (conv2_hw() < 1)
    throw ContractError("arch: conv2 kernel " + std::to_string(conv2_k) +
                        " does not fit pooled size " + std::to_string(pool1_hw()));
  if (conv2_hw() < pool || (conv2_hw() - pool) % pool != 0)
    throw ContractError("arch: pool " + std::to_string(pool) + " does not tile conv2 output " +
                        std::to_string(conv2_hw()));
}

std::string ArchConfig::to_text() const {
  std::string s;
  auto put = [&](const char* k, const std::string& v) {
    s += k;
    s += '=';
    s += v;
    s += '\n';
  };
  put("size", std::to_string(size));
  put("joints", std::to_string(joints));
  put("layers", std::to_string(layers));
  put("seq_len", std::to_string(seq_len));
  put("conv1_out", std::to_string(conv1_out));
  put("conv1_k", std::to_string(conv1_k));
  put("conv2_out", std::to_string(conv2_out));
  put("conv2_k", std::to_string(conv2_k));
  put("pool", std::to_string(pool));
  put("fc_dim", std::to_string(fc_dim));
  put("lstm_dim", std::to_string(lstm_dim));
  put("fusion_hidden", std::to_string(fusion_hidden));
  put("dropout", format_double(dropout));
  return s;
}

namespace {

// Returns false when the key is not an architecture field.
bool apply_arch_kv(ArchConfig& a, const std::string& k, const std::string& v) {
  auto as_int = [&](int& field) { field = static_cast<int>(parse_ll(v, "arch." + k)); };
  if (k == "size") as_int(a.size);
  else if (k == "joints") as_int(a.joints);
  else if (k == "layers") as_int(a.layers);
  else if (k == "seq_len") as_int(a.seq_len);
  else if (k == "conv1_out") as_int(a.conv1_out);
  else if (k == "conv1_k") as_int(a.conv1_k);
  else if (k == "conv2_out") as_int(a.conv2_out);
  else if (k == "conv2_k") as_int(a.conv2_k);
  else if (k == "pool") as_int(a.pool);
  else if (k == "fc_dim") as_int(a.fc_dim);
  else if (k == "lstm_dim") as_int(a.lstm_dim);
  else if (k == "fusion_hidden") as_int(a.fusion_hidden);
  else if (k == "dropout") a.dropout = parse_double(v, "arch.dropout");
  else return false;
  return true;
}

}  // namespace

ArchConfig ArchConfig::from_text(const std::string& text) {
  ArchConfig a;
  for (const auto& [k, v] : parse_kv_text(text))
    if (!apply_arch_kv(a, k, v)) throw ContractError("unknown architecture key: " + k);
  a.validate();
  return a;
}

std::string make_checkpoint_meta(const std::string& kind, const ArchConfig& arch) {
  return "kind=" + kind + "\n" + arch.to_text();
}

CheckpointInfo parse_checkpoint_meta(const std::string& meta) {
  CheckpointInfo info;
  for (const auto& [k, v] : parse_kv_text(meta)) {
    if (k == "kind") {
      info.kind = v;
    } else if (!apply_arch_kv(info.arch, k, v)) {
      throw ContractError("unknown checkpoint metadata key: " + k);
    }
  }
  if (info.kind.empty()) throw ContractError("checkpoint metadata has no kind");
  info.arch.validate();
  return info;
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  return parse_checkpoint_meta(load_checkpoint(path).meta);
}

// ---- shared building blocks ----

template <class T>
Tensor<T> depth_leaf(Tape<T>& tape, const std::vector<float>& depth, int size) {
  if (depth.size() != static_cast<std::size_t>(size) * size)
    throw ContractError("depth input has " + std::to_string(depth.size()) + " values, expected " +
                        std::to_string(size) + "x" + std::to_string(size));
  std::vector<T> vals(depth.begin(), depth.end());
  return tape.leaf({1, static_cast<std::size_t>(size), static_cast<std::size_t>(size)},
                   std::move(vals));
}

template <class T>
Tensor<T> volume_leaf(Tape<T>& tape, const SlicedVolume& volume) {
  std::vector<T> vals(volume.v.begin(), volume.v.end());
  return tape.leaf({static_cast<std::size_t>(volume.layers), static_cast<std::size_t>(volume.size),
                    static_cast<std::size_t>(volume.size)},
                   std::move(vals));
}

namespace {

template <class T>
Param<T>& add_weight(ParamStore<T>& store, const std::string& name, Shape shape, std::size_t fan_in,
                     Rng& rng) {
  Param<T>& p = store.add(name, std::move(shape));
  init_uniform_fan_in(p, fan_in, rng);
  return p;
}

// Registration order is the initialization order; encoders always register
// conv1, conv2, fc with weight before bias.
template <class T>
EncoderRefs<T> register_encoder(ParamStore<T>& store, const std::string& prefix, int cin,
                                const ArchConfig& a, Rng& rng) {
  const auto u = [](int v) { return static_cast<std::size_t>(v); };
  EncoderRefs<T> e;
  e.c1w = &add_weight(store, prefix + ".conv1.w", {u(a.conv1_out), u(cin), u(a.conv1_k), u(a.conv1_k)},
                      u(cin) * a.conv1_k * a.conv1_k, rng);
  e.c1b = &store.add(prefix + ".conv1.b", {u(a.conv1_out)});
  e.c2w = &add_weight(store, prefix + ".conv2.w",
                      {u(a.conv2_out), u(a.conv1_out), u(a.conv2_k), u(a.conv2_k)},
                      u(a.conv1_out) * a.conv2_k * a.conv2_k, rng);
  e.c2b = &store.add(prefix + ".conv2.b", {u(a.conv2_out)});
  e.fw = &add_weight(store, prefix + ".fc.w", {u(a.fc_dim), a.encoder_flat()}, a.encoder_flat(), rng);
  e.fb = &store.add(prefix + ".fc.b", {u(a.fc_dim)});
  return e;
}

template <class T>
Tensor<T> encode(Tape<T>& tape, Tensor<T> x, const EncoderRefs<T>& e, const ArchConfig& a,
                 bool use_dropout, Rng* rng) {
  x = conv2d(x, tape.bind(*e.c1w), tape.bind(*e.c1b), 1);
  x = tanh(x);
  x = maxpool2d(x, a.pool, a.pool);
  x = conv2d(x, tape.bind(*e.c2w), tape.bind(*e.c2b), 1);
  x = tanh(x);
  x = maxpool2d(x, a.pool, a.pool);
  x = fully_connected(x, tape.bind(*e.fw), tape.bind(*e.fb));
  x = tanh(x);
  if (use_dropout) x = dropout(x, a.dropout, RunMode::train, *rng);
  return x;
}

}  // namespace

// ---- SpatialNet ----

template <class T>
SpatialNet<T>::SpatialNet(const ArchConfig& arch, std::uint64_t init_seed) : arch_(arch) {
  arch_.validate();
  Rng rng = Rng::substream(init_seed, Rng::tag("init.spatial"));
  const auto u = [](int v) { return static_cast<std::size_t>(v); };
  const std::size_t fc = u(arch_.fc_dim);

  enc_d_ = register_encoder(store_, "depth", 1, arch_, rng);
  enc_v_ = register_encoder(store_, "volume", arch_.layers, arch_, rng);

  auto fuse_pair = [&](const char* name, Param<T>*& w, Param<T>*& b) {
    w = &add_weight(store_, std::string(name) + ".w", {fc, fc}, fc, rng);
    b = &store_.add(std::string(name) + ".b", {fc});
  };
  fuse_pair("fuse1.depth", h1d_w_, h1d_b_);
  fuse_pair("fuse1.volume", h1v_w_, h1v_b_);
  fuse_pair("fuse2.depth", h2d_w_, h2d_b_);
  fuse_pair("fuse2.volume", h2v_w_, h2v_b_);

  head1_w_ = &add_weight(store_, "head.fc1.w", {fc, fc}, fc, rng);
  head1_b_ = &store_.add("head.fc1.b", {fc});
  head2_w_ = &add_weight(store_, "head.fc2.w", {u(arch_.out_dim()), fc}, fc, rng);
  head2_b_ = &store_.add("head.fc2.b", {u(arch_.out_dim())});
}

template <class T>
typename SpatialNet<T>::Forward SpatialNet<T>::forward(Tape<T>& tape,
                                                       const std::vector<float>& depth,
                                                       const SlicedVolume& volume, RunMode mode,
                                                       Rng* drop_rng) {
  if (volume.size != arch_.size || volume.layers != arch_.layers)
    throw ContractError("spatial forward: volume is " + std::to_string(volume.size) + "x" +
                        std::to_string(volume.layers) + " layers, model expects " +
                        std::to_string(arch_.size) + "x" + std::to_string(arch_.layers));
  const bool dp = mode == RunMode::train && arch_.dropout > 0;
  if (dp && !drop_rng) throw ContractError("spatial forward: train mode with dropout needs an rng");

  Forward f;
  f.feat_depth = encode(tape, depth_leaf(tape, depth, arch_.size), enc_d_, arch_, dp, drop_rng);
  f.feat_volume = encode(tape, volume_leaf(tape, volume), enc_v_, arch_, dp, drop_rng);
  f.phi0 = elementwise_mean(f.feat_depth, f.feat_volume);

  auto transform = [&](Param<T>* w, Param<T>* b, const Tensor<T>& in) {
    Tensor<T> y = fully_connected(in, tape.bind(*w), tape.bind(*b));
    y = tanh(y);
    if (dp) y = dropout(y, arch_.dropout, mode, *drop_rng);
    return y;
  };
  auto head = [&](const Tensor<T>& in) {
    Tensor<T> y = fully_connected(in, tape.bind(*head1_w_), tape.bind(*head1_b_));
    y = tanh(y);
    if (dp) y = dropout(y, arch_.dropout, mode, *drop_rng);
    return fully_connected(y, tape.bind(*head2_w_), tape.bind(*head2_b_));
  };

  f.phi1 = elementwise_mean(transform(h1d_w_, h1d_b_, f.phi0), transform(h1v_w_, h1v_b_, f.phi0));
  f.phi2 = elementwise_mean(transform(h2d_w_, h2d_b_, f.phi1), transform(h2v_w_, h2v_b_, f.phi1));
  f.main = head(f.phi2);

  if (mode == RunMode::train) {
    // auxiliary paths: per-branch features pushed through the same shared
    // transforms and the same head, adding losses but no parameters
    f.aux_depth = head(transform(h2d_w_, h2d_b_, transform(h1d_w_, h1d_b_, f.feat_depth)));
    f.aux_volume = head(transform(h2v_w_, h2v_b_, transform(h1v_w_, h1v_b_, f.feat_volume)));
  }
  return f;
}

// ---- TemporalNet ----

template <class T>
TemporalNet<T>::TemporalNet(const ArchConfig& arch, std::uint64_t init_seed) : arch_(arch) {
  arch_.validate();
  // distinct stream per model class so equal seeds cannot clone an encoder
  Rng rng = Rng::substream(init_seed, Rng::tag("init.temporal"));
  const auto u = [](int v) { return static_cast<std::size_t>(v); };
  const std::size_t dh = u(arch_.lstm_dim), fc = u(arch_.fc_dim);

  enc_ = register_encoder(store_, "enc", 1, arch_, rng);

  auto gate = [&](const char* name, Param<T>*& wh, Param<T>*& wx, Param<T>*& b) {
    wh = &add_weight(store_, std::string("lstm.") + name + ".wh", {dh, dh}, dh, rng);
    wx = &add_weight(store_, std::string("lstm.") + name + ".wx", {dh, fc}, fc, rng);
    b = &store_.add(std::string("lstm.") + name + ".b", {dh});
  };
  gate("input", whi_, wxi_, bi_);
  gate("forget", whf_, wxf_, bf_);
  gate("output", who_, wxo_, bo_);
  gate("cell", whc_, wxc_, bc_);
  std::fill(bf_->value.begin(), bf_->value.end(), T(1));  // start remembering

  out_w_ = &add_weight(store_, "out.w", {u(arch_.out_dim()), dh + fc}, dh + fc, rng);
  out_b_ = &store_.add("out.b", {u(arch_.out_dim())});
}

template <class T>
typename TemporalNet<T>::Forward TemporalNet<T>::forward(
    Tape<T>& tape, const std::vector<const std::vector<float>*>& frames) {
  if (frames.size() != static_cast<std::size_t>(arch_.seq_len))
    throw ContractError("temporal forward: got " + std::to_string(frames.size()) +
                        " frames, configured sequence length is " + std::to_string(arch_.seq_len));

  LstmGateParams<T> gate;
  gate.whi = tape.bind(*whi_); gate.wxi = tape.bind(*wxi_); gate.bi = tape.bind(*bi_);
  gate.whf = tape.bind(*whf_); gate.wxf = tape.bind(*wxf_); gate.bf = tape.bind(*bf_);
  gate.who = tape.bind(*who_); gate.wxo = tape.bind(*wxo_); gate.bo = tape.bind(*bo_);
  gate.whc = tape.bind(*whc_); gate.wxc = tape.bind(*wxc_); gate.bc = tape.bind(*bc_);

  const std::size_t dh = static_cast<std::size_t>(arch_.lstm_dim);
  LstmState<T> state{tape.leaf({dh}), tape.leaf({dh})};

  Forward f;
  for (const std::vector<float>* frame : frames) {
    if (!frame) throw ContractError("temporal forward: null frame");
    Tensor<T> phi = encode(tape, depth_leaf(tape, *frame, arch_.size), enc_, arch_, false, nullptr);
    state = lstm_cell(phi, state, gate);
    Tensor<T> pred = fully_connected(concat(state.h, phi), tape.bind(*out_w_), tape.bind(*out_b_));
    f.preds.push_back(pred);
    f.h.push_back(state.h);
    f.c.push_back(state.c);
  }
  return f;
}

// ---- FusionNet ----

template <class T>
FusionNet<T>::FusionNet(const ArchConfig& arch, std::uint64_t init_seed) : arch_(arch) {
  arch_.validate();
  Rng rng = Rng::substream(init_seed, Rng::tag("init.fusion"));
  const auto u = [](int v) { return static_cast<std::size_t>(v); };
  const std::size_t in = 2 * u(arch_.out_dim()), hid = u(arch_.fusion_hidden);
  fc1_w_ = &add_weight(store_, "fc1.w", {hid, in}, in, rng);
  fc1_b_ = &store_.add("fc1.b", {hid});
  fc2_w_ = &add_weight(store_, "fc2.w", {u(arch_.out_dim()), hid}, hid, rng);
  fc2_b_ = &store_.add("fc2.b", {u(arch_.out_dim())});
}

template <class T>
typename FusionNet<T>::Forward FusionNet<T>::forward(Tape<T>& tape, const Tensor<T>& j_temp,
                                                     const Tensor<T>& j_spa) {
  const std::size_t d = static_cast<std::size_t>(arch_.out_dim());
  if (j_temp.numel() != d || j_spa.numel() != d)
    throw ContractError("fusion forward: predictions have " + std::to_string(j_temp.numel()) +
                        " and " + std::to_string(j_spa.numel()) + " values, model expects " +
                        std::to_string(d));
  Forward f;
  Tensor<T> h = tanh(fully_connected(concat(j_temp, j_spa), tape.bind(*fc1_w_), tape.bind(*fc1_b_)));
  f.w1 = sigmoid(fully_connected(h, tape.bind(*fc2_w_), tape.bind(*fc2_b_)));
  f.w2 = affine(f.w1, T(-1), T(1));  // exact 1 - w1
  f.out = add(mul(f.w1, j_temp), mul(f.w2, j_spa));
  return f;
}

// ---- BranchNet ----

template <class T>
BranchNet<T>::BranchNet(const ArchConfig& arch, Kind kind, std::uint64_t init_seed)
    : arch_(arch), kind_(kind) {
  arch_.validate();
  Rng rng = Rng::substream(init_seed, Rng::tag("init.branch"));
  const auto u = [](int v) { return static_cast<std::size_t>(v); };
  const std::size_t fc = u(arch_.fc_dim);
  enc_ = register_encoder(store_, "branch", kind_ == Kind::depth ? 1 : arch_.layers, arch_, rng);
  head1_w_ = &add_weight(store_, "head.fc1.w", {fc, fc}, fc, rng);
  head1_b_ = &store_.add("head.fc1.b", {fc});
  head2_w_ = &add_weight(store_, "head.fc2.w", {u(arch_.out_dim()), fc}, fc, rng);
  head2_b_ = &store_.add("head.fc2.b", {u(arch_.out_dim())});
}

template <class T>
typename BranchNet<T>::Forward BranchNet<T>::tail(Tape<T>& tape, Tensor<T> feat, RunMode mode,
                                                  Rng* drop_rng) {
  const bool dp = mode == RunMode::train && arch_.dropout > 0;
  Forward f;
  f.feat = feat;
  Tensor<T> y = fully_connected(feat, tape.bind(*head1_w_), tape.bind(*head1_b_));
  y = tanh(y);
  if (dp) y = dropout(y, arch_.dropout, mode, *drop_rng);
  f.pred = fully_connected(y, tape.bind(*head2_w_), tape.bind(*head2_b_));
  return f;
}

template <class T>
typename BranchNet<T>::Forward BranchNet<T>::forward(Tape<T>& tape, const std::vector<float>& depth,
                                                     RunMode mode, Rng* drop_rng) {
  if (kind_ != Kind::depth)
    throw ContractError("branch forward: this model consumes sliced volumes, not depth frames");
  const bool dp = mode == RunMode::train && arch_.dropout > 0;
  if (dp && !drop_rng) throw ContractError("branch forward: train mode with dropout needs an rng");
  return tail(tape, encode(tape, depth_leaf(tape, depth, arch_.size), enc_, arch_, dp, drop_rng),
              mode, drop_rng);
}

template <class T>
typename BranchNet<T>::Forward BranchNet<T>::forward(Tape<T>& tape, const SlicedVolume& volume,
                                                     RunMode mode, Rng* drop_rng) {
  if (kind_ != Kind::volume)
    throw ContractError("branch forward: this model consumes depth frames, not sliced volumes");
  if (volume.size != arch_.size || volume.layers != arch_.layers)
    throw ContractError("branch forward: volume shape does not match the model");
  const bool dp = mode == RunMode::train && arch_.dropout > 0;
  if (dp && !drop_rng) throw ContractError("branch forward: train mode with dropout needs an rng");
  return tail(tape, encode(tape, volume_leaf(tape, volume), enc_, arch_, dp, drop_rng), mode,
              drop_rng);
}

// ---- checkpoint plumbing ----

namespace {

template <class Net>
Net load_net(const std::string& path, const std::string& kind) {
  const Checkpoint ckpt = load_checkpoint(path);
  const CheckpointInfo info = parse_checkpoint_meta(ckpt.meta);
  if (info.kind != kind)
    throw ContractError(path + " holds a '" + info.kind + "' model, expected '" + kind + "'");
  Net net(info.arch, 0);
  from_checkpoint(net.params(), ckpt);
  return net;
}

}  // namespace

template <class T>
void SpatialNet<T>::save(const std::string& path) const {
  save_checkpoint(path, to_checkpoint(store_, make_checkpoint_meta("spatial", arch_)));
}
template <class T>
SpatialNet<T> SpatialNet<T>::load(const std::string& path) {
  return load_net<SpatialNet<T>>(path, "spatial");
}

template <class T>
void TemporalNet<T>::save(const std::string& path) const {
  save_checkpoint(path, to_checkpoint(store_, make_checkpoint_meta("temporal", arch_)));
}
template <class T>
TemporalNet<T> TemporalNet<T>::load(const std::string& path) {
  return load_net<TemporalNet<T>>(path, "temporal");
}

template <class T>
void FusionNet<T>::save(const std::string& path) const {
  save_checkpoint(path, to_checkpoint(store_, make_checkpoint_meta("fusion", arch_)));
}
template <class T>
FusionNet<T> FusionNet<T>::load(const std::string& path) {
  return load_net<FusionNet<T>>(path, "fusion");
}

template <class T>
void BranchNet<T>::save(const std::string& path) const {
  save_checkpoint(path, to_checkpoint(store_, make_checkpoint_meta(
                                                  kind_ == Kind::depth ? "branch_depth" : "branch_volume",
                                                  arch_)));
}
template <class T>
BranchNet<T> BranchNet<T>::load(const std::string& path) {
  const CheckpointInfo info = read_checkpoint_info(path);
  if (info.kind != "branch_depth" && info.kind != "branch_volume")
    throw ContractError(path + " holds a '" + info.kind + "' model, expected a branch model");
  BranchNet net(info.arch, info.kind == "branch_depth" ? Kind::depth : Kind::volume, 0);
  from_checkpoint(net.params(), load_checkpoint(path));
  return net;
}

template class SpatialNet<float>;
template class SpatialNet<double>;
template class TemporalNet<float>;
template class TemporalNet<double>;
template class FusionNet<float>;
template class FusionNet<double>;
template class BranchNet<float>;
template class BranchNet<double>;
template Tensor<float> depth_leaf<float>(Tape<float>&, const std::vector<float>&, int);
template Tensor<double> depth_leaf<double>(Tape<double>&, const std::vector<float>&, int);
template Tensor<float> volume_leaf<float>(Tape<float>&, const SlicedVolume&);
template Tensor<double> volume_leaf<double>(Tape<double>&, const SlicedVolume&);

}  // namespace stpose
