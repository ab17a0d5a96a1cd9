#pragma once

#include <cstdint>

namespace pyroprop {

// splitmix64: stateless mixer used for seed derivation and lattice noise.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    return mix64(seed ^ (v + 0x9e3779b97f4a7c15ULL));
}

// xoshiro-free minimal counter RNG: identical output on every platform, so
// seeded artifacts are byte-reproducible. A splitmix64 stream is plenty for
// scenario synthesis and the +/-1 random walk.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        // Lemire-style rejection-free reduction is biased for huge n; the
        // ranges used here are tiny, so 128-bit multiply reduction is exact
        // enough and deterministic.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // RAND({-1, +1})
    int next_sign() { return (next_u64() & 1u) ? 1 : -1; }

    bool next_bool() { return (next_u64() & 1u) != 0; }

private:
    std::uint64_t state_;
};

} // namespace pyroprop
