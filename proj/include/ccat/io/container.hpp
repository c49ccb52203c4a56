#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ccat/error.hpp"
#include <nlohmann/json.hpp>

// Little-endian tensor container shared by checkpoints and feature caches:
//   "CCAT" | u32 version | u32 config length | config JSON |
//   u32 tensor count | per tensor: u16 name length, name, u8 dtype,
//   u8 ndim, u32 dims[ndim], raw values.
namespace ccat::io {

inline constexpr char kMagic[4] = {'C', 'C', 'A', 'T'};
inline constexpr std::uint32_t kVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kU8 = 1 };

inline std::size_t dtype_size(DType d) { return d == DType::kF32 ? 4 : 1; }

struct NamedArray {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;  // little-endian element data

  std::size_t elements() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  static NamedArray from_f32(std::string name, std::vector<std::uint32_t> dims, std::span<const float> v) {
    NamedArray a{std::move(name), DType::kF32, std::move(dims), {}};
    a.bytes.resize(v.size() * 4);
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::uint32_t raw;
      std::memcpy(&raw, &v[i], 4);
      for (int b = 0; b < 4; ++b) a.bytes[i * 4 + b] = static_cast<std::uint8_t>(raw >> (8 * b));
    }
    return a;
  }

  static NamedArray from_u8(std::string name, std::vector<std::uint32_t> dims, std::span<const std::uint8_t> v) {
    return NamedArray{std::move(name), DType::kU8, std::move(dims), {v.begin(), v.end()}};
  }

  std::vector<float> as_f32() const {
    if (dtype != DType::kF32) throw FormatError("tensor '" + name + "' is not f32");
    std::vector<float> v(bytes.size() / 4);
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::uint32_t raw = 0;
      for (int b = 0; b < 4; ++b) raw |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
      std::memcpy(&v[i], &raw, 4);
    }
    return v;
  }
};

struct Container {
  nlohmann::json config = nlohmann::json::object();
  std::vector<NamedArray> tensors;

  const NamedArray* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void put(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw CorruptCheckpoint("container truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Container& c) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  detail::put(out, kVersion, 4);
  const std::string cfg = c.config.dump();
  detail::put(out, cfg.size(), 4);
  out.insert(out.end(), cfg.begin(), cfg.end());
  detail::put(out, c.tensors.size(), 4);
  for (const auto& t : c.tensors) {
    if (t.bytes.size() != t.elements() * dtype_size(t.dtype))
      throw FormatError("tensor '" + t.name + "' byte length disagrees with its dims");
    detail::put(out, t.name.size(), 2);
    out.insert(out.end(), t.name.begin(), t.name.end());
    detail::put(out, static_cast<std::uint8_t>(t.dtype), 1);
    detail::put(out, t.dims.size(), 1);
    for (auto d : t.dims) detail::put(out, d, 4);
    out.insert(out.end(), t.bytes.begin(), t.bytes.end());
  }
  return out;
}

inline Container decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic");
  detail::Reader r(bytes.subspan(4));
  const auto version = r.uint(4);
  if (version != kVersion) throw FormatError("unsupported container version " + std::to_string(version));
  Container c;
  const auto cfg_len = r.uint(4);
  const auto cfg = r.take(cfg_len);
  try {
    c.config = nlohmann::json::parse(cfg.begin(), cfg.end());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("config JSON: ") + e.what());
  }
  const auto count = r.uint(4);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray t;
    const auto name = r.take(r.uint(2));
    t.name.assign(name.begin(), name.end());
    const auto dtype = r.uint(1);
    if (dtype > 1) throw CorruptCheckpoint("unknown dtype " + std::to_string(dtype));
    t.dtype = static_cast<DType>(dtype);
    const auto ndim = r.uint(1);
    for (std::uint64_t d = 0; d < ndim; ++d) t.dims.push_back(static_cast<std::uint32_t>(r.uint(4)));
    const auto data = r.take(t.elements() * dtype_size(t.dtype));
    t.bytes.assign(data.begin(), data.end());
    c.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CorruptCheckpoint("trailing bytes after last tensor");
  return c;
}

inline void write_file(const std::filesystem::path& path, const Container& c) {
  const auto bytes = encode(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

inline Container read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace ccat::io
