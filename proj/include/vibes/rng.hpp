#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vibes {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Named seed derivation: the same (root, component, index) always yields the same seed,
/// independent of how many other seeds were drawn before it.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view component, std::uint64_t index = 0) noexcept {
    return mix64(mix64(root ^ fnv1a(component)) + mix64(index));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace vibes
