#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dpe {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad parameter values, malformed config files,
/// guardrail refusals (grid too large, budget parity violations).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Data problems: parse failures, ordering violations, degenerate columns,
/// insufficient rows, empty partitions, shape mismatches.
class DataError : public Error {
public:
    using Error::Error;
};

/// Object used before it was put into a valid state (e.g. predict on an
/// unfitted machine).
class StateError : public Error {
public:
    using Error::Error;
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent seed stream from a primary seed. Every stochastic
/// step of the toolkit draws its seed through this, so one primary seed
/// governs a whole experiment.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(seed, a), b);
}

/// FNV-1a over a byte string. Stable across platforms; used for config
/// hashing and cache keys.
inline constexpr std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Hex rendering of a 64-bit hash, zero padded to 16 chars.
inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

} // namespace dpe
