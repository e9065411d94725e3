#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace rewardlab {

/// Every stochastic consumer owns one of these. Streams are never shared
/// implicitly; they are derived from a master seed with derive_seed().
using Rng = std::mt19937_64;

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// hash(master, stage, index): the seed of a named sub-stream.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage,
                          std::uint64_t index = 0) noexcept;

/// hash(master, a, b): used for per-(user, item) and per-episode streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                          std::uint64_t b) noexcept;

inline Rng make_stream(std::uint64_t seed) { return Rng{seed}; }

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>{0.0, 1.0}(rng);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>{0.0, 1.0}(rng);
}

/// Uniform integer in [lo, hi].
inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>{lo, hi}(rng);
}

}  // namespace rewardlab
