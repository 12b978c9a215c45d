// Deterministic RNG helpers. std::mt19937_64 supplies the stream; bounded
// draws use rejection sampling instead of std::uniform_int_distribution so
// sequences are identical across standard libraries.
#pragma once

#include <cstdint>
#include <random>

namespace countlab {

using Rng = std::mt19937_64;

// Uniform draw from [0, n). n must be >= 1.
inline uint64_t rand_below(Rng& rng, uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

// Uniform draw from the inclusive range [lo, hi].
inline int rand_range(Rng& rng, int lo, int hi) {
    return lo + static_cast<int>(rand_below(rng, static_cast<uint64_t>(hi - lo + 1)));
}

}  // namespace countlab
