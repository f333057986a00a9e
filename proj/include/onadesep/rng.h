#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace onadesep {

// Every stochastic operation takes an explicit stream; callers own seeding.
using Rng = std::mt19937_64;

// Derives an independent subordinate seed from a parent seed and a purpose
// label: SHA-256 over (seed as 8 little-endian bytes, purpose, index as 8
// little-endian bytes), first 8 digest bytes read little-endian.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                          std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view purpose,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(seed, purpose, index));
}

}  // namespace onadesep
