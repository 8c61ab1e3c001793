#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "mrg/common.hpp"

namespace mrg {

/// Deterministic 64-bit generator (SplitMix64): a counter-based scheme where
/// the state advances by a fixed odd constant and the output is a bijective
/// mix of the counter. Every stochastic call site takes an Rng explicitly;
/// there is no global generator. State is a single u64, trivially
/// checkpointable.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; draws two uniforms per call so the
    /// state advance per call is fixed (no cached spare).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        if (n == 0) throw Error("Rng::below: n must be positive");
        return next_u64() % n;
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

    /// Stateless scramble used to derive independent per-item seeds, e.g.
    /// seed = mix(corpus_seed, sample_id).
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    uint64_t state_;
};

} // namespace mrg
