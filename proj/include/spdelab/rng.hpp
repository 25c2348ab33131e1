#pragma once

// Deterministic counter-derived random streams.
//
// Every draw in the library flows from one master seed through
// derive_key(master, kind, unit, replicate). Each logical unit (a particle,
// a projection, a validation sample) owns its own stream, so thread
// scheduling can never reorder draws and reruns are bit-identical.

#include <cstdint>
#include <cmath>
#include <numbers>
#include <span>

namespace spdelab::rng {

// SplitMix64 output function (Stafford mix 13).
constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

enum class StreamKind : std::uint64_t {
    InitialState = 1,
    Noise = 2,
    InitialStateSecondary = 3,  // independent (non-coupled) second initial law
    Validation = 4,
    SlicedProjection = 5,
};

constexpr std::uint64_t derive_key(std::uint64_t master, StreamKind kind,
                                   std::uint64_t unit, std::uint64_t replicate = 0) {
    std::uint64_t h = mix64(master + 0x9e3779b97f4a7c15ULL);
    h = mix64(h ^ (static_cast<std::uint64_t>(kind) + 0x9e3779b97f4a7c15ULL));
    h = mix64(h ^ (unit + 0x9e3779b97f4a7c15ULL));
    h = mix64(h ^ (replicate + 0x9e3779b97f4a7c15ULL));
    return h;
}

class Stream {
public:
    Stream() : state_(0) {}
    explicit Stream(std::uint64_t key) : state_(key) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix64(state_);
    }

    // Uniform on (0,1); never returns 0 or 1.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

    // Standard normal via Box-Muller (cosine branch). Consumes exactly two
    // uniforms per draw, so the stream position is input-independent.
    double next_normal() {
        double u1 = next_uniform();
        double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    void fill_normal(std::span<double> out) {
        for (double& v : out) v = next_normal();
    }

private:
    std::uint64_t state_;
};

inline Stream make_stream(std::uint64_t master, StreamKind kind, std::uint64_t unit,
                          std::uint64_t replicate = 0) {
    return Stream(derive_key(master, kind, unit, replicate));
}

}  // namespace spdelab::rng
