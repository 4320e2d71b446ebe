// Deterministic random number generation. The standard library's engines are
// reproducible but its distributions are not, so the transforms live here and
// results are bit-identical across platforms and runs.
#pragma once

#include <cstdint>
#include <cmath>

namespace cf {

namespace detail {
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
} // namespace detail

// xoshiro256++ seeded through splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : seed_(seed) {
        uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64(sm);
    }

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the second variate is discarded so each
    // call consumes exactly two uniforms.
    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Uniform integer in [0, n). Lemire multiply-shift; the O(2^-64) bias is
    // irrelevant at our sample counts.
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    // Independent child stream; does not disturb this generator's state.
    Rng fork(uint64_t stream) const {
        uint64_t sm = seed_ ^ (0xd1b54a32d192ed03ull * (stream + 1));
        return Rng(detail::splitmix64(sm));
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t seed_;
    uint64_t state_[4];
};

} // namespace cf
