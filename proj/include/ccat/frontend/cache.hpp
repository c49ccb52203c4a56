#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ccat/frontend/context.hpp"
#include "ccat/io/container.hpp"
#include <nlohmann/json.hpp>

namespace ccat::frontend {

/// FNV-1a 64-bit, used to fingerprint feature configurations.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Feature cache file: the checkpoint container holding `features`
/// (f32, T x F x C) and `mask` (u8, T).
inline void save_feature_cache(const std::filesystem::path& path, const ContextTensor& ct,
                               const nlohmann::json& meta) {
  io::Container c;
  c.config = meta;
  c.tensors.push_back(io::NamedArray::from_f32(
      "features",
      {static_cast<std::uint32_t>(ct.frames), static_cast<std::uint32_t>(ct.bins),
       static_cast<std::uint32_t>(ct.context)},
      ct.data));
  c.tensors.push_back(io::NamedArray::from_u8("mask", {static_cast<std::uint32_t>(ct.frames)}, ct.valid_mask));
  io::write_file(path, c);
}

struct CachedFeatures {
  ContextTensor features;
  nlohmann::json meta;
};

inline CachedFeatures load_feature_cache(const std::filesystem::path& path) {
  const auto c = io::read_file(path);
  const auto* f = c.find("features");
  const auto* m = c.find("mask");
  if (f == nullptr || m == nullptr || f->dims.size() != 3 || m->dims.size() != 1 || m->dims[0] != f->dims[0] ||
      m->dtype != io::DType::kU8)
    throw CorruptCheckpoint("feature cache " + path.string() + " lacks features/mask tensors");
  CachedFeatures out;
  out.meta = c.config;
  out.features.frames = static_cast<int>(f->dims[0]);
  out.features.bins = static_cast<int>(f->dims[1]);
  out.features.context = static_cast<int>(f->dims[2]);
  out.features.data = f->as_f32();
  out.features.valid_mask = m->bytes;
  return out;
}

}  // namespace ccat::frontend
