#pragma once

#include <cmath>
#include <cstdint>

namespace eirehn {

// splitmix64 finalizer step (Steele, Lea, Flood / Vigna).
inline uint64_t splitmix64_next(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Deterministic sub-stream seed: one splitmix64 step over the base seed
// xor'd with the key scaled by the 64-bit golden ratio. Every component
// that needs its own stream (sample index, run index, shuffle, init)
// derives through here so a single seed reproduces a whole experiment.
inline uint64_t derive_seed(uint64_t base, uint64_t key) {
    uint64_t s = base ^ (0x9E3779B97F4A7C15ull * (key + 1));
    return splitmix64_next(s);
}

// xoshiro256++ (Blackman & Vigna) seeded via splitmix64. Fixed algorithm,
// so identical seeds give identical draw sequences on every platform.
// Doubles use the 53-bit mantissa convention (x >> 11) * 2^-53.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64_next(sm);
    }

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() {
        uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Index in [0, bound); modulo convention (bias negligible for the
    // bounds used here and keeps the draw sequence platform-stable).
    size_t uniform_index(size_t bound) { return static_cast<size_t>(next_u64() % bound); }

    // Standard normal via Box-Muller: u1 in (0, 1], u2 in [0, 1),
    // returns r*cos first and caches r*sin for the next call.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Rng child(uint64_t key) const { return Rng(derive_seed(seed_, key)); }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t seed_;
    uint64_t s_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace eirehn
