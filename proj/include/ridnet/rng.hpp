#pragma once

#include <cstdint>

namespace ridnet::rng {

/// SplitMix64 finaliser.
constexpr std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    return mix(mix(mix(seed) ^ stream) ^ counter);
}

/// Uniform in [0,1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Named streams so unrelated consumers of one seed never share draws.
enum Stream : std::uint64_t {
    init_generator = 1,
    init_critic = 2,
    init_features = 3,
    phantom = 4,
    noise = 5,
    shuffle = 6,
    interpolation = 7,
    patch_jitter = 8,
    test_data = 9,
};

/// Counter-based generator: draw n of (seed, stream) is a pure function of n.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    std::uint64_t next() { return hash(seed_, stream_, counter_++); }
    double uniform() { return to_unit(next()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Box-Muller, one value per two draws.
    double normal();
    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

}  // namespace ridnet::rng
