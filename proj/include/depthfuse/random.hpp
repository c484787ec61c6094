#pragma once

#include <cstdint>

#include "depthfuse/math.hpp"

// Counter-based deterministic random numbers. Every consumer derives its
// generator from an explicit (seed, index...) key, so any draw can be
// reproduced in isolation and results do not depend on evaluation order.

namespace depthfuse {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a;
    std::uint64_t h = splitmix64(s);
    s = h ^ (b + 0x9e3779b97f4a7c15ULL);
    return splitmix64(s);
}

// Build a stream key from up to four indices.
inline std::uint64_t rng_key(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                             std::uint64_t c = 0) {
    std::uint64_t k = hash_mix(seed, a);
    k = hash_mix(k, b);
    k = hash_mix(k, c);
    return k;
}

class Rng {
  public:
    explicit Rng(std::uint64_t key) : state_(key) {
        // Burn one round so a zero key does not emit zero first.
        splitmix64(state_);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; consumes two uniforms per call.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Uniform direction on the unit sphere.
    Vec3 unit_vector() {
        const double z = uniform(-1.0, 1.0);
        const double phi = uniform(0.0, 2.0 * M_PI);
        const double r = std::sqrt(std::fmax(0.0, 1.0 - z * z));
        return {r * std::cos(phi), r * std::sin(phi), z};
    }

    // Uniform point in the closed ball of the given radius.
    Vec3 in_ball(double radius) {
        const Vec3 dir = unit_vector();
        const double r = radius * std::cbrt(uniform());
        return dir * r;
    }

  private:
    std::uint64_t state_;
};

}  // namespace depthfuse
