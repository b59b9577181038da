#pragma once

#include <cstdint>
#include <random>

namespace mcev {

/// splitmix64 step; used to derive independent stream seeds from one user seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Mix a seed with one or more stream identifiers so that every (seed, ids...)
/// combination yields an independent, reproducible generator seed.
inline std::uint64_t derive_seed(std::uint64_t seed) {
    return splitmix64(seed);
}

template <typename... Ids>
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t id, Ids... rest) {
    std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL + id);
    return derive_seed(splitmix64(s), rest...);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(derive_seed(seed)); }

} // namespace mcev
