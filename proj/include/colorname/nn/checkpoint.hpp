#pragma once

// Model checkpoint container.
//
// Layout (all integers little-endian):
//   8 bytes   magic "CLRNCKPT"
//   u32       format version (1)
//   u64       header length N
//   N bytes   header, UTF-8 JSON with sorted keys (hyperparameters, vocab, ...)
//   u32       array count K
//   K times:  u32 name length, name bytes, u64 rows, u64 cols,
//             rows*cols IEEE-754 float64 values in column-major order

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "colorname/nn/param_store.hpp"

namespace colorname::nn {

inline constexpr char kCheckpointMagic[8] = {'C', 'L', 'R', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> arrays;

  const Matrix& array(const std::string& name) const {
    for (const auto& [n, m] : arrays) {
      if (n == name) return m;
    }
    throw CheckpointError("checkpoint has no array named " + name);
  }

  bool has_array(const std::string& name) const {
    for (const auto& a : arrays) {
      if (a.first == name) return true;
    }
    return false;
  }
};

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits;
  std::memcpy(&bits, &value, sizeof bits);
  for (std::size_t i = 0; i < sizeof bits; ++i) out += static_cast<char>((bits >> (8 * i)) & 0xFF);
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <class T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    T value;
    std::memcpy(&value, &bits, sizeof value);
    return value;
  }

  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le(out, kCheckpointVersion);
  const std::string header = ck.header.dump();
  detail::put_le(out, static_cast<std::uint64_t>(header.size()));
  out += header;
  detail::put_le(out, static_cast<std::uint32_t>(ck.arrays.size()));
  for (const auto& [name, m] : ck.arrays) {
    detail::put_le(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_le(out, static_cast<std::uint64_t>(m.rows()));
    detail::put_le(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.size(); ++k) detail::put_le(out, m.data()[k]);
  }
  return out;
}

inline Checkpoint parse_checkpoint(std::string_view data) {
  detail::Reader r(data);
  if (r.bytes(sizeof kCheckpointMagic) != std::string_view(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto header_len = r.get<std::uint64_t>();
  try {
    ck.header = nlohmann::json::parse(r.bytes(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.bytes(name_len));
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows > (1u << 30) || cols > (1u << 30)) throw CheckpointError("array " + name + " is implausibly large");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<double>();
    ck.arrays.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint arrays");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path);
  const std::string bytes = serialize_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

/// Appends every parameter of `ps` as a named array.
inline void append_params(Checkpoint& ck, const ParamStore& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i) ck.arrays.emplace_back(ps.names()[i], ps.values()[i]);
}

/// Copies arrays into same-named parameters; every parameter must be present
/// with the right shape.
inline void restore_params(const Checkpoint& ck, ParamStore& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Matrix& m = ck.array(ps.names()[i]);
    Matrix& dst = ps.value(ParamId{i});
    if (m.rows() != dst.rows() || m.cols() != dst.cols()) {
      throw CheckpointError("shape mismatch for parameter " + ps.names()[i]);
    }
    dst = m;
  }
}

}  // namespace colorname::nn
