#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "uniprompt/tensor.hpp"

namespace uniprompt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

// Layout: 8-byte magic, u32 meta length + JSON metadata, u32 parameter count,
// then per parameter: u32 name length + name, u32 rank, u32 extents,
// u64 element count, raw little-endian f32 values.
inline constexpr char kCheckpointMagic[8] = {'U', 'P', 'C', 'K', '0', '0', '0', '1'};

struct Checkpoint {
  std::string meta_json;
  std::vector<std::pair<std::string, Tensor>> params;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("checkpoint truncated");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ck.meta_json.size()));
  os.write(ck.meta_json.data(), static_cast<std::streamsize>(ck.meta_json.size()));
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& [name, t] : ck.params) {
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int e : t.shape) detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    detail::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(t.data.size()));
    for (double x : t.data) detail::write_pod<float>(os, static_cast<float>(x));
  }
  if (!os) throw DataError("write failure on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw DataError("bad checkpoint magic in " + path);
  }
  Checkpoint ck;
  const auto meta_len = detail::read_pod<std::uint32_t>(is);
  ck.meta_json.resize(meta_len);
  is.read(ck.meta_json.data(), meta_len);
  if (!is) throw DataError("checkpoint truncated in metadata: " + path);
  const auto n_params = detail::read_pod<std::uint32_t>(is);
  ck.params.reserve(n_params);
  for (std::uint32_t p = 0; p < n_params; ++p) {
    const auto name_len = detail::read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw DataError("checkpoint truncated in parameter name: " + path);
    const auto rank = detail::read_pod<std::uint32_t>(is);
    std::vector<int> shape(rank);
    for (auto& e : shape) e = static_cast<int>(detail::read_pod<std::uint32_t>(is));
    const auto count = detail::read_pod<std::uint64_t>(is);
    if (count != Tensor::numel(shape)) {
      throw DataError("checkpoint parameter '" + name + "' count does not match its shape");
    }
    Tensor t = Tensor::zeros(shape);
    for (std::uint64_t i = 0; i < count; ++i) {
      t.data[i] = static_cast<double>(detail::read_pod<float>(is));
    }
    ck.params.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

}  // namespace uniprompt
