#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace mantis {

// SplitMix64 finalizer. Used as the mixing step of keyed derivations.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Keyed 64-bit hash of a byte string (FNV-1a over the bytes, then mixed with
// the key). Not cryptographic; only has to be deterministic and well spread.
constexpr std::uint64_t keyed_hash(std::uint64_t key, std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(key);
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(h ^ key);
}

// Tiny UniformRandomBitGenerator with O(1) seeding. The tarpit constructs one
// per directory node, where std::mt19937_64's 312-word state would dominate.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Unbiased integer in [0, bound). bound must be > 0.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            std::uint64_t r = (*this)();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform double in [0, 1).
    constexpr double unit() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

}  // namespace mantis
