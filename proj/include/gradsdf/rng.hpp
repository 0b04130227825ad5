#pragma once

#include <cmath>
#include <cstdint>

#include "gradsdf/core.hpp"

namespace gradsdf {

// SplitMix64 (Steele, Lea, Flood 2014). Chosen over std::mt19937_64 because the
// full generator fits in a dozen lines, so the exact stream is reproducible
// from this file alone. All randomness in the project flows through it.
struct SplitMix64 {
    uint64_t state = 0;

    explicit SplitMix64(uint64_t seed = 0) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n), n > 0. Modulo bias is irrelevant at our n.
    uint64_t below(uint64_t n) { return next() % n; }

    // Box-Muller, no caching: every call consumes exactly two uniforms.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 0x1.0p-60) u1 = 0x1.0p-60;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Uniform direction on the unit sphere; consumes exactly two uniforms.
    Vec3 unit_vector() {
        double z = 1.0 - 2.0 * uniform();
        double phi = 6.283185307179586 * uniform();
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {r * std::cos(phi), r * std::sin(phi), z};
    }
};

}  // namespace gradsdf
