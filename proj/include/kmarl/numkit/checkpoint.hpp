#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmarl/numkit/tape.hpp"

// Checkpoint layout (all integers and floats little-endian):
//
//   8 bytes   magic "KMARLCKP"
//   u32       format version (currently 1)
//   u32       header entry count H
//   H times:  u32 key length, key bytes, u32 value length, value bytes
//   u64       parameter count P
//   P times:  u32 name length, name bytes, u64 rows, u64 cols,
//             rows*cols float64 values in row-major order
//
// Header entries are written in key order, so equal inputs give equal bytes.

namespace kmarl::num {

inline constexpr char kCheckpointMagic[8] = {'K', 'M', 'A', 'R', 'L', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedMatrix {
  std::string name;
  Matrix value;
};

struct Checkpoint {
  std::map<std::string, std::string> header;
  std::vector<NamedMatrix> params;
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw std::runtime_error("checkpoint: unexpected end of file");
  }
  return v;
}

inline std::string get_string(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n)) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const std::map<std::string, std::string>& header,
                             std::span<const Param* const> params) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(header.size()));
  for (const auto& [k, v] : header) {
    detail::put_string(os, k);
    detail::put_string(os, v);
  }
  detail::put<std::uint64_t>(os, params.size());
  for (const Param* p : params) {
    detail::put_string(os, p->name);
    detail::put<std::uint64_t>(os, p->value.rows());
    detail::put<std::uint64_t>(os, p->value.cols());
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const std::map<std::string, std::string>& header,
                            std::span<const Param* const> params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(os, header, params);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[sizeof(kCheckpointMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto entries = detail::get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < entries; ++i) {
    std::string k = detail::get_string(is);
    ck.header[k] = detail::get_string(is);
  }
  const auto count = detail::get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedMatrix nm;
    nm.name = detail::get_string(is);
    const auto rows = detail::get<std::uint64_t>(is);
    const auto cols = detail::get<std::uint64_t>(is);
    std::vector<double> data(rows * cols);
    if (!data.empty() &&
        !is.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw std::runtime_error("checkpoint: truncated values for " + nm.name);
    }
    nm.value = Matrix(rows, cols, std::move(data));
    ck.params.push_back(std::move(nm));
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  return read_checkpoint(is);
}

/// Copies checkpoint values into params matched by name; shapes must agree.
inline void restore(const Checkpoint& ck, std::span<Param* const> params) {
  for (Param* p : params) {
    const NamedMatrix* found = nullptr;
    for (const NamedMatrix& nm : ck.params) {
      if (nm.name == p->name) {
        found = &nm;
        break;
      }
    }
    if (found == nullptr) throw std::runtime_error("checkpoint: missing parameter " + p->name);
    if (!found->value.same_shape(p->value)) {
      throw ShapeError("checkpoint: parameter " + p->name + " has shape " + found->value.shape() +
                       ", expected " + p->value.shape());
    }
    p->value = found->value;
  }
}

}  // namespace kmarl::num
