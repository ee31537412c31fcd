#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "crn/adam.hpp"
#include "crn/errors.hpp"
#include "crn/nn.hpp"

namespace crn {

// Versioned binary container for params, optimizer state, step counter and
// RNG state. Values round-trip bit-exactly (raw IEEE bytes, little-endian).
inline constexpr char kCheckpointMagic[8] = {'C', 'R', 'N', 'C', 'K', 'P', 'T', '1'};
inline constexpr char kCheckpointEnd[8] = {'C', 'R', 'N', 'E', 'N', 'D', '.', '1'};

namespace detail {

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n) throw IoError("truncated checkpoint file");
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  read_bytes(is, &v, sizeof(T));
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint64_t>(os, s.size());
  write_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is) {
  const uint64_t n = read_pod<uint64_t>(is);
  if (n > (1ULL << 30)) throw IoError("corrupt checkpoint: oversized string");
  std::string s(n, '\0');
  read_bytes(is, s.data(), n);
  return s;
}

template <typename Real>
void write_tensor(std::ostream& os, const Tensor<Real>& t) {
  write_pod<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
  for (int64_t d : t.shape) write_pod<int64_t>(os, d);
  write_bytes(os, t.data.data(), t.data.size() * sizeof(Real));
}

template <typename Real>
Tensor<Real> read_tensor(std::istream& is) {
  const uint32_t nd = read_pod<uint32_t>(is);
  if (nd > 8) throw IoError("corrupt checkpoint: tensor rank " + std::to_string(nd));
  std::vector<int64_t> shape(nd);
  for (auto& d : shape) d = read_pod<int64_t>(is);
  Tensor<Real> t(shape);
  read_bytes(is, t.data.data(), t.data.size() * sizeof(Real));
  return t;
}

}  // namespace detail

struct CheckpointMeta {
  uint64_t iteration = 0;
  std::string config_text;
  std::string rng_state;
};

template <typename Real>
void save_checkpoint(const std::string& path, ParamStore<Real>& params, const AdamOpt<Real>& opt,
                     const CheckpointMeta& meta) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  detail::write_bytes(os, kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod<uint32_t>(os, 1);                             // container version
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(sizeof(Real)));
  detail::write_pod<uint64_t>(os, meta.iteration);
  detail::write_string(os, meta.config_text);
  detail::write_string(os, meta.rng_state);
  detail::write_pod<uint64_t>(os, params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    detail::write_string(os, params.at(i).name);
    detail::write_tensor(os, params.at(i).value);
  }
  detail::write_pod<uint64_t>(os, opt.size());
  for (size_t i = 0; i < opt.size(); ++i) {
    detail::write_pod<int64_t>(os, opt.state(i).t);
    detail::write_tensor(os, opt.state(i).m);
    detail::write_tensor(os, opt.state(i).v);
  }
  detail::write_bytes(os, kCheckpointEnd, sizeof(kCheckpointEnd));
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

// Reads only the embedded metadata, so callers can build a model of the
// right shape before loading the values.
inline CheckpointMeta peek_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  detail::read_bytes(is, magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IoError("bad checkpoint magic in " + path);
  const uint32_t version = detail::read_pod<uint32_t>(is);
  if (version != 1) throw IoError("unsupported checkpoint version " + std::to_string(version));
  detail::read_pod<uint32_t>(is);  // real width
  CheckpointMeta meta;
  meta.iteration = detail::read_pod<uint64_t>(is);
  meta.config_text = detail::read_string(is);
  meta.rng_state = detail::read_string(is);
  return meta;
}

template <typename Real>
CheckpointMeta load_checkpoint(const std::string& path, ParamStore<Real>& params,
                               AdamOpt<Real>& opt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  detail::read_bytes(is, magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IoError("bad checkpoint magic in " + path);
  const uint32_t version = detail::read_pod<uint32_t>(is);
  if (version != 1) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const uint32_t width = detail::read_pod<uint32_t>(is);
  if (width != sizeof(Real))
    throw ConfigError("checkpoint precision (" + std::to_string(width * 8) +
                      "-bit) does not match this build");
  CheckpointMeta meta;
  meta.iteration = detail::read_pod<uint64_t>(is);
  meta.config_text = detail::read_string(is);
  meta.rng_state = detail::read_string(is);
  const uint64_t n = detail::read_pod<uint64_t>(is);
  if (n != params.size())
    throw ConfigError("checkpoint holds " + std::to_string(n) + " params, model has " +
                      std::to_string(params.size()) + " (config mismatch)");
  for (size_t i = 0; i < n; ++i) {
    const std::string name = detail::read_string(is);
    Tensor<Real> value = detail::read_tensor<Real>(is);
    Param<Real>& p = params.at(i);
    if (p.name != name || p.value.shape != value.shape)
      throw ConfigError("checkpoint param " + name + " does not match model param " + p.name +
                        " (config mismatch)");
    p.value = std::move(value);
    p.zero_grad();
  }
  const uint64_t ns = detail::read_pod<uint64_t>(is);
  if (ns != opt.size()) throw ConfigError("checkpoint optimizer state count mismatch");
  for (size_t i = 0; i < ns; ++i) {
    opt.state(i).t = detail::read_pod<int64_t>(is);
    opt.state(i).m = detail::read_tensor<Real>(is);
    opt.state(i).v = detail::read_tensor<Real>(is);
    if (opt.state(i).m.shape != params.at(i).value.shape)
      throw ConfigError("checkpoint optimizer state shape mismatch at " + params.at(i).name);
  }
  char end[8];
  detail::read_bytes(is, end, 8);
  if (std::memcmp(end, kCheckpointEnd, 8) != 0) throw IoError("truncated checkpoint file");
  return meta;
}

}  // namespace crn
