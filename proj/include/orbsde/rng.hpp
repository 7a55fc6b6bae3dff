#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace orbsde::rng {

/// Stateless 64-bit mixer (splitmix64 finalizer). Used as a keyed PRF so
/// that every (stream, counter) pair yields the same value regardless of
/// evaluation order or thread schedule.
inline std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t prf(std::uint64_t key, std::uint64_t counter) {
    return mix(key ^ mix(counter + 0x632BE59BD9B4E019ULL));
}

/// Derive a per-stream key from a master seed (one stream per path).
inline std::uint64_t stream_key(std::uint64_t master_seed, std::uint64_t stream) {
    return mix(master_seed + 0xA3EC4F1D1C05B2A9ULL * (stream + 1));
}

/// Uniform in (0, 1); never returns 0 so it is safe under log().
inline double uniform01(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal via Box-Muller from two counter values.
inline double normal(std::uint64_t key, std::uint64_t counter) {
    const double u1 = uniform01(prf(key, 2 * counter));
    const double u2 = uniform01(prf(key, 2 * counter + 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace orbsde::rng
