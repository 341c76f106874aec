#pragma once

#include <cstdint>

namespace cpg {

// SplitMix64. Standard-library distributions are implementation-defined, so
// every stochastic component draws through this generator to keep runs
// bit-reproducible across platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit mantissa.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return next_double() < p; }

    // Uniform integer in [lo, hi], inclusive. Rejection-free modulo is fine
    // here; ranges are tiny compared to 2^64 so the bias is negligible and,
    // more importantly, the sequence is stable.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

private:
    uint64_t state_;
};

}  // namespace cpg
