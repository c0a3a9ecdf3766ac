// Seeded random streams. Every random draw in the library goes through an
// Rng seeded from a derived 64-bit key, so results depend only on the key.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fsyn {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Stream key for one synthetic sample: independent of generation order.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view source_id, std::uint64_t index) {
    return splitmix64(splitmix64(master ^ splitmix64(fnv1a(source_id))) + index);
}

inline double uniform(Rng &rng, double lo, double hi) {
    if (!(hi > lo)) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng &rng, double mean, double stddev) {
    if (!(stddev > 0.0)) return mean;
    return std::normal_distribution<double>(mean, stddev)(rng);
}

} // namespace fsyn
