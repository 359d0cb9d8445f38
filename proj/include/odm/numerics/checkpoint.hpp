#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "odm/numerics/parameters.hpp"

// Binary parameter checkpoint:
//   "ODM1" | u32 version | records until EOF
//   record = u32 name_len | name (UTF-8) | u32 rank | u64 extents[rank] | f64 payload
// All integers and floats little-endian.

namespace odm::nn {

inline constexpr std::array<char, 4> kCheckpointMagic{'O', 'D', 'M', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace detail {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("checkpoint: truncated record");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const ParameterStore& store) {
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& e : store.entries()) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) detail::put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(e.value.data()), e.value.size() * sizeof(double));
  }
  return out;
}

struct NamedTensor {
  std::string name;
  Tensor value;
};

inline std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin()))
    throw std::runtime_error("checkpoint: bad magic");
  std::size_t pos = 4;
  const auto version = detail::take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  std::vector<NamedTensor> out;
  while (pos < bytes.size()) {
    const auto len = detail::take<std::uint32_t>(bytes, pos);
    if (pos + len > bytes.size()) throw std::runtime_error("checkpoint: truncated name");
    std::string name = bytes.substr(pos, len);
    pos += len;
    const auto rank = detail::take<std::uint32_t>(bytes, pos);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(detail::take<std::uint64_t>(bytes, pos));
    const std::size_t n = shape_size(shape);
    if (pos + n * sizeof(double) > bytes.size()) throw std::runtime_error("checkpoint: truncated payload");
    std::vector<double> data(n);
    std::memcpy(data.data(), bytes.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

inline void save_checkpoint(const ParameterStore& store, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  const std::string bytes = encode_checkpoint(store);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

inline std::vector<NamedTensor> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

/// Copies every stored tensor into the matching parameter. Shapes must
/// agree; names absent from the store are an error.
inline void load_into(ParameterStore& store, const std::vector<NamedTensor>& tensors) {
  for (const auto& nt : tensors) {
    if (!store.contains(nt.name)) throw std::runtime_error("checkpoint: unknown parameter '" + nt.name + "'");
    auto& e = store.entry(nt.name);
    if (e.value.shape() != nt.value.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + nt.name + "': " +
                               shape_str(e.value.shape()) + " vs " + shape_str(nt.value.shape()));
    e.value = nt.value;
  }
}

}  // namespace odm::nn
