// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cmath>

namespace ropim {

// Counter-based generator with a fully specified integer pipeline, so the
// same seed yields the same stream on every platform and compiler.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

    // Unbiased integer in [0, n). Lemire's multiply-shift with rejection.
    uint32_t below(uint32_t n) {
        uint64_t x = next_u32();
        uint64_t m = x * n;
        auto lo = static_cast<uint32_t>(m);
        if (lo < n) {
            uint32_t t = (0u - n) % n;
            while (lo < t) {
                x = next_u32();
                m = x * n;
                lo = static_cast<uint32_t>(m);
            }
        }
        return static_cast<uint32_t>(m >> 32);
    }

    bool coin() { return (next_u64() & 1u) != 0; }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Box-Muller; no spare caching so the draw count per call is fixed.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Normal truncated to +/- 2 sigma, resampled.
    double truncated_normal(double sigma) {
        double z = normal();
        while (z < -2.0 || z > 2.0) z = normal();
        return z * sigma;
    }

private:
    uint64_t state_;
};

// Order-free combiner used to derive sub-seeds, e.g. per (epoch, sample).
inline uint64_t hash_mix(uint64_t a, uint64_t b) {
    uint64_t z = b + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    z ^= a;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline uint64_t sub_seed(uint64_t global_seed, uint64_t epoch, uint64_t sample_index) {
    return hash_mix(hash_mix(global_seed, epoch), sample_index);
}

}  // namespace ropim
