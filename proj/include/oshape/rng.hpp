#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace oshape {

// Deterministic RNG used everywhere randomness is consumed. All draws are
// derived from raw 64-bit outputs so that a fixed seed reproduces bitwise
// identical sequences on any build. Gaussian draws use one Box-Muller branch
// per call (no cached second value), which keeps substreams independent of
// call history.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Independent stream for (seed, index), e.g. one per evaluation frame.
    static Rng substream(std::uint64_t seed, std::uint64_t index) {
        return Rng(mix(seed ^ mix(index + 0x9E3779B97F4A7C15ULL)));
    }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on the open interval (0,1).
    double uniform01() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double gaussian() {
        double u1 = uniform01();
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Standard Gumbel(0,1): -log(-log(u)).
    double gumbel() { return -std::log(-std::log(uniform01())); }

    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(gen_() % n);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 gen_;
};

} // namespace oshape
