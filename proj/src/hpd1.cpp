#include "stpose/hpd1.hpp"

#include <algorithm>

#include "bytes.hpp"

namespace stpose {

namespace {
constexpr char kMagic[4] = {'H', 'P', 'D', '1'};
constexpr std::uint32_t kFormatVersion = 1;
}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> Hpd1Dataset::sequence_ranges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= frames.size(); ++i) {
    if (i == frames.size() || frames[i].seq != frames[begin].seq) {
      out.emplace_back(begin, i);
      begin = i;
    }
  }
  return out;
}

void Hpd1Dataset::validate() const {
  if (size <= 0 || joints <= 0 || layers <= 0 || seq_len <= 0)
    throw ContractError("hpd1: dimensions must be positive");
  const std::size_t px = static_cast<std::size_t>(size) * size;
  const std::size_t pk = static_cast<std::size_t>(joints) * 3;
  const Hpd1Frame* prev = nullptr;
  for (const auto& fr : frames) {
    if (fr.depth.size() != px)
      throw ContractError("hpd1: frame depth size " + std::to_string(fr.depth.size()) +
                          " does not match M=" + std::to_string(size));
    if (fr.pose.size() != pk)
      throw ContractError("hpd1: frame pose size " + std::to_string(fr.pose.size()) +
                          " does not match K=" + std::to_string(joints));
    if (prev) {
      if (prev->seq > fr.seq || (prev->seq == fr.seq && prev->idx >= fr.idx)) {
        if (prev->seq == fr.seq && prev->idx == fr.idx)
          throw ContractError("hpd1: duplicate frame (seq " + std::to_string(fr.seq) + ", idx " +
                              std::to_string(fr.idx) + ")");
        throw ContractError("hpd1: frames not sorted by (seq, idx)");
      }
    }
    prev = &fr;
  }
}

void save_hpd1(const std::string& path, const Hpd1Dataset& ds) {
  ds.validate();
  std::string out;
  out.append(kMagic, 4);
  bytes::put_u32(out, kFormatVersion);
  bytes::put_u32(out, static_cast<std::uint32_t>(ds.frames.size()));
  bytes::put_u32(out, static_cast<std::uint32_t>(ds.size));
  bytes::put_u32(out, static_cast<std::uint32_t>(ds.joints));
  bytes::put_u32(out, static_cast<std::uint32_t>(ds.layers));
  bytes::put_u32(out, static_cast<std::uint32_t>(ds.seq_len));
  for (const auto& fr : ds.frames) {
    for (float v : fr.depth) bytes::put_f32(out, v);
    for (float v : fr.pose) bytes::put_f32(out, v);
    bytes::put_u32(out, fr.seq);
    bytes::put_u32(out, fr.idx);
  }
  bytes::write_file(path, out);
}

Hpd1Dataset load_hpd1(const std::string& path) {
  const std::string blob = bytes::read_file(path);
  bytes::ByteReader r(blob, path);
  if (r.str(4) != std::string(kMagic, 4)) throw IoError("not an HPD1 file: " + path);
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw IoError("unsupported HPD1 version " + std::to_string(version) + ": " + path);

  Hpd1Dataset ds;
  const std::uint32_t n = r.u32();
  ds.size = static_cast<int>(r.u32());
  ds.joints = static_cast<int>(r.u32());
  ds.layers = static_cast<int>(r.u32());
  ds.seq_len = static_cast<int>(r.u32());
  if (ds.size <= 0 || ds.size > 4096 || ds.joints <= 0 || ds.joints > 4096 || ds.layers <= 0 ||
      ds.layers > 4096 || ds.seq_len <= 0)
    throw IoError("implausible HPD1 header in " + path);

  const std::size_t px = static_cast<std::size_t>(ds.size) * ds.size;
  const std::size_t pk = static_cast<std::size_t>(ds.joints) * 3;
  ds.frames.resize(n);
  for (auto& fr : ds.frames) {
    fr.depth.resize(px);
    for (auto& v : fr.depth) v = r.f32();
    fr.pose.resize(pk);
    for (auto& v : fr.pose) v = r.f32();
    fr.seq = r.u32();
    fr.idx = r.u32();
  }
  if (!r.at_end()) throw IoError("trailing bytes in HPD1 file: " + path);

  // file order is not trusted; the sorted order is the canonical one
  std::stable_sort(ds.frames.begin(), ds.frames.end(), [](const Hpd1Frame& a, const Hpd1Frame& b) {
    return a.seq != b.seq ? a.seq < b.seq : a.idx < b.idx;
  });
  try {
    ds.validate();
  } catch (const ContractError& e) {
    throw IoError(path + ": " + e.what());
  }
  return ds;
}

}  // namespace stpose
