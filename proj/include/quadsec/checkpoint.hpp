#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "quadsec/nn.hpp"

namespace quadsec {

struct checkpoint_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Binary checkpoint layout (all integers and doubles little-endian):
//   magic "QSCK", u32 version, u32 input_dim, u32 n_hidden, u32[n_hidden],
//   u32 action_dim, u64 seed, u8 has_adam,
//   f64 weights in layer order (trunk W,b per layer; mean W,b; value W,b),
//   f64 log_std[action_dim],
//   [f64 adam m, f64 adam v, i64 adam step]  if has_adam,
//   u64 FNV-1a hash of everything before it.
struct Checkpoint {
  PolicyParams params;
  std::optional<AdamState> adam;
  std::uint64_t seed = 0;
};

inline std::uint64_t fnv1a(const unsigned char* data, std::size_t n,
                           std::uint64_t h = 1469598103934665603ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::vector<unsigned char>& bytes) {
  return fnv1a(bytes.data(), bytes.size());
}

namespace detail {

template <class T>
void put(std::vector<unsigned char>& buf, T v) {
  unsigned char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.insert(buf.end(), tmp, tmp + sizeof(T));
}

template <class T>
T get(const std::vector<unsigned char>& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size()) throw checkpoint_error("truncated checkpoint");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace detail

inline std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ck) {
  using detail::put;
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), {'Q', 'S', 'C', 'K'});
  put<std::uint32_t>(buf, 1);
  put<std::uint32_t>(buf, std::uint32_t(ck.params.spec.input_dim));
  put<std::uint32_t>(buf, std::uint32_t(ck.params.spec.hidden.size()));
  for (int h : ck.params.spec.hidden) put<std::uint32_t>(buf, std::uint32_t(h));
  put<std::uint32_t>(buf, std::uint32_t(ck.params.spec.action_dim));
  put<std::uint64_t>(buf, ck.seed);
  put<std::uint8_t>(buf, ck.adam ? 1 : 0);
  for (double v : ck.params.flatten()) put<double>(buf, v);
  if (ck.adam) {
    for (double v : ck.adam->m) put<double>(buf, v);
    for (double v : ck.adam->v) put<double>(buf, v);
    put<std::int64_t>(buf, ck.adam->step);
  }
  put<std::uint64_t>(buf, fnv1a(buf));
  return buf;
}

inline Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& buf) {
  using detail::get;
  if (buf.size() < 12 || buf[0] != 'Q' || buf[1] != 'S' || buf[2] != 'C' ||
      buf[3] != 'K')
    throw checkpoint_error("bad checkpoint magic");
  std::size_t off = 4;
  if (get<std::uint32_t>(buf, off) != 1)
    throw checkpoint_error("unsupported checkpoint version");
  MlpSpec spec;
  spec.input_dim = int(get<std::uint32_t>(buf, off));
  const auto nh = get<std::uint32_t>(buf, off);
  spec.hidden.clear();
  for (std::uint32_t i = 0; i < nh; ++i)
    spec.hidden.push_back(int(get<std::uint32_t>(buf, off)));
  spec.action_dim = int(get<std::uint32_t>(buf, off));
  if (!spec.valid()) throw checkpoint_error("invalid spec in checkpoint");

  Checkpoint ck;
  ck.seed = get<std::uint64_t>(buf, off);
  const bool has_adam = get<std::uint8_t>(buf, off) != 0;
  ck.params = PolicyParams::zeros(spec);
  std::vector<double> flat(ck.params.count());
  for (double& v : flat) v = get<double>(buf, off);
  ck.params.unflatten(flat);
  if (has_adam) {
    AdamState adam = AdamState::zeros(ck.params);
    for (double& v : adam.m) v = get<double>(buf, off);
    for (double& v : adam.v) v = get<double>(buf, off);
    adam.step = get<std::int64_t>(buf, off);
    ck.adam = std::move(adam);
  }
  const std::uint64_t stored = get<std::uint64_t>(buf, off);
  if (stored != fnv1a(buf.data(), off - sizeof(std::uint64_t)))
    throw checkpoint_error("checkpoint checksum mismatch");
  if (off != buf.size()) throw checkpoint_error("trailing bytes in checkpoint");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const auto buf = serialize_checkpoint(ck);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw checkpoint_error("cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
  if (!f) throw checkpoint_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw checkpoint_error("cannot open: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  return deserialize_checkpoint(buf);
}

inline std::uint64_t checkpoint_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw checkpoint_error("cannot open: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  return fnv1a(buf);
}

}  // namespace quadsec
