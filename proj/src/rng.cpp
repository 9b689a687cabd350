#include "meada/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace meada {

std::int64_t Rng::uniform_int(std::int64_t n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    // rejection sampling to avoid modulo bias
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do {
        x = gen();
    } while (x >= limit);
    return static_cast<std::int64_t>(x % un);
}

double Rng::normal() {
    if (has_spare) {
        has_spare = false;
        return spare;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare = r * std::sin(theta);
    has_spare = true;
    return r * std::cos(theta);
}

std::int64_t Rng::poisson(double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("poisson: negative lambda");
    if (lambda == 0.0) return 0;
    const double limit = std::exp(-lambda);
    std::int64_t k = 0;
    double p = uniform();
    while (p > limit) {
        ++k;
        p *= uniform();
    }
    return k;
}

static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a,
                          std::uint64_t b) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    h = splitmix64(h ^ seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return h;
}

}  // namespace meada
