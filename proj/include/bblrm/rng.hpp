#pragma once

// Seeding and stream splitting.
//
// Every random stream in the library is a std::mt19937_64 seeded with a
// single 64-bit value. Child seeds are derived from a parent seed and a
// stream label with derive_seed(), so any stream can be reconstructed from
// the master seed without replaying its siblings:
//
//   trial seed        = derive_seed(master, trial_index)
//   outcome seed (k)  = derive_seed(trial seed, kOutcomeStream + k)
//   engine seed (k)   = derive_seed(trial seed, kEngineStream + k)
//   MCMC seed         = derive_seed(engine seed, kMcmcStream)
//   delta seed        = derive_seed(engine seed, kDeltaStream)

#include <cstdint>
#include <random>

namespace bblrm {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t kOutcomeStream = 0x1000;
inline constexpr std::uint64_t kEngineStream = 0x2000;
inline constexpr std::uint64_t kMcmcStream = 1;
inline constexpr std::uint64_t kDeltaStream = 2;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) noexcept {
    return splitmix64(parent ^ splitmix64(stream));
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace bblrm
