#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace prefgen {

// splitmix64 finalizer. Fixed mixing function used for all seed derivation and
// attribute signatures so results are bit-exact across platforms.
inline uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) {
    return mix64(a ^ mix64(b));
}

// FNV-1a over raw bytes.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

// unit double in [0,1) from a 64-bit word
inline double u64_to_unit(uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Deterministic counter-free RNG: splitmix64 stream plus Box-Muller normals.
// std::normal_distribution is implementation-defined, so we roll our own to
// keep seeded runs reproducible across standard libraries.
class DetRng {
public:
    explicit DetRng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    // uniform in [0,1)
    double uniform() { return u64_to_unit(next_u64()); }

    // uniform in [lo,hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0,n)
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller, second draw cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0,1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // derived independent stream for job `index`
    DetRng fork(uint64_t index) const { return DetRng(mix64(state_, index)); }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace prefgen
