#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/frontend/context.hpp"

namespace ccat::training {

inline constexpr int kBucketWidthFrames = 100;

/// Groups utterance indices into batches of similar length. Utterances are
/// bucketed by frame count (width 100), shuffled within each bucket with a
/// per-epoch seed, chunked, and the batch order is shuffled too.
inline std::vector<std::vector<std::size_t>> make_batches(std::span<const int> frame_counts, int batch_size,
                                                          std::uint64_t seed, int epoch = 0) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::map<int, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < frame_counts.size(); ++i) buckets[frame_counts[i] / kBucketWidthFrames].push_back(i);

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::vector<std::vector<std::size_t>> batches;
  for (auto& [_, members] : buckets) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t s = 0; s < members.size(); s += static_cast<std::size_t>(batch_size)) {
      const auto e = std::min(members.size(), s + static_cast<std::size_t>(batch_size));
      batches.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(s),
                           members.begin() + static_cast<std::ptrdiff_t>(e));
    }
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

/// Zero-pads every member to the longest one; masks mark the real frames.
inline std::vector<frontend::ContextTensor> pad_batch(std::span<const frontend::ContextTensor* const> members) {
  if (members.empty()) throw EmptyBatch("padding an empty batch");
  int longest = 0;
  for (const auto* ct : members) longest = std::max(longest, ct->frames);
  std::vector<frontend::ContextTensor> out;
  out.reserve(members.size());
  for (const auto* ct : members) out.push_back(frontend::pad_frames(*ct, longest));
  return out;
}

}  // namespace ccat::training
