#pragma once

// Deterministic RNG streams. Every consumer derives its own stream from
// (master seed, tag, index) so results do not depend on scheduling or worker
// count. Distribution transforms are implemented here because the std::
// distributions are not byte-stable across standard libraries.

#include "egat/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace egat {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    static Rng stream(std::uint64_t master, std::string_view tag, std::uint64_t index = 0) {
        return Rng(splitmix64(master ^ splitmix64(hash_tag(tag) + 0x42ull * index + index)));
    }

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    real uniform01() { return static_cast<real>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    real uniform(real lo, real hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n), Lemire multiply-shift (n << 2^64 here, bias negligible
    // and the mapping is fixed, which is all determinism needs).
    int uniform_int(int n) {
        using u128 = unsigned __int128;
        return static_cast<int>((static_cast<u128>(next_u64()) * static_cast<u128>(n)) >> 64);
    }

    // Standard normal via Box-Muller; two fresh uniforms per call.
    real normal() {
        real u1 = (static_cast<real>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
        real u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace egat
