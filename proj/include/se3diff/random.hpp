#pragma once

#include <cstdint>
#include <random>

namespace se3diff {

using Rng = std::mt19937_64;

// Independent generator for sub-stream `stream` of a run seeded with `seed`.
// Parallel paths and chains each take their own stream so results do not
// depend on scheduling.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint32_t tag = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), tag};
  return Rng(seq);
}

}  // namespace se3diff
