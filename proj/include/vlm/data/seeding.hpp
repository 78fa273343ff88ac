#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace vlm {

// Independent generator for a named sub-stream of a run seed, e.g.
// derive_rng(seed, {kEpochStream, epoch}). Same inputs, same stream.
inline std::mt19937_64 derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (std::uint64_t s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace vlm
