#pragma once

#include <cstdint>
#include <string_view>

namespace mmdec {

// splitmix64. Every random quantity in the project is derived from a single
// root seed through named substreams, so reruns are bit-identical.
struct Rng {
    uint64_t state = 0;

    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    float uniform(float lo, float hi) {
        return lo + (hi - lo) * static_cast<float>(uniform());
    }

    // uniform integer in [0,n)
    uint64_t below(uint64_t n) { return next() % n; }
};

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x00000100000001B3ull;
    }
    return h;
}

// Stable substream derivation: mix a tag into the root seed.
inline uint64_t derive_seed(uint64_t root, std::string_view tag) {
    Rng r(root ^ fnv1a64(tag));
    return r.next();
}

inline uint64_t derive_seed(uint64_t root, uint64_t salt) {
    Rng r(root ^ (salt * 0x9E3779B97F4A7C15ull + 0x7F4A7C15ull));
    return r.next();
}

} // namespace mmdec
