#pragma once

#include <cstdint>
#include <random>

namespace wmx2 {

// Deterministic random source. All randomness in the engine (init, dropout,
// patch sampling) flows through one of these so that a fixed seed reproduces
// runs bit-for-bit.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : gen_(seed) {}

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, bound). bound must be > 0. The modulo bias is
    // ~bound/2^64, irrelevant at the bounds used here.
    uint64_t integer(uint64_t bound) { return gen_() % bound; }

    uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
};

}  // namespace wmx2
