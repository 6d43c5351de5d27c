#pragma once

#include <cstdint>
#include <random>

namespace lidarsim {

/// SplitMix64 mixing step; a bijection on 64-bit values.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based seed derivation: injective in `index` for a fixed master seed,
/// so frames can be generated independently and in parallel.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master + 0x632be59bd9b4e019ULL * (index + 1));
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

}  // namespace lidarsim
