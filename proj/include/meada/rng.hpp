#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace meada {

// Deterministic random stream. mt19937_64 raw output is fully specified by the
// standard, and every distribution here is derived from it with fixed
// arithmetic, so a seed produces the same sequence on any platform or
// toolchain (std::*_distribution would not guarantee that).
struct Rng {
    std::mt19937_64 gen;
    bool has_spare = false;
    double spare = 0.0;

    explicit Rng(std::uint64_t seed) : gen(seed) {}

    std::uint64_t next_u64() { return gen(); }

    // uniform in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::int64_t uniform_int(std::int64_t n);

    // standard normal via Box-Muller, spare value cached
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Poisson by inversion of the product of uniforms; fine for lambda <~ 700
    std::int64_t poisson(double lambda);
};

// Sub-seed derivation: every module derives its streams from the single run
// seed via this hash so that runs are reproducible and workers are
// schedule-independent. FNV-1a over the tag, then splitmix64 rounds folding
// in the numeric arguments.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a = 0,
                          std::uint64_t b = 0);

}  // namespace meada
