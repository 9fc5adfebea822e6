#include "dscmp/numkit/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace dscmp {

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_index: empty range");
    const std::uint64_t range = static_cast<std::uint64_t>(n);
    // Largest multiple of `range` representable; draws at or above it are rejected.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t draw = next_u64();
    while (draw >= limit) draw = next_u64();
    return static_cast<std::size_t>(draw % range);
}

double Rng::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vec sample_gaussian(Rng& rng, std::span<const Real> mu, std::span<const Real> sigma) {
    if (mu.size() != sigma.size()) {
        throw ShapeError("sample_gaussian: mu has " + std::to_string(mu.size()) +
                         " entries, sigma has " + std::to_string(sigma.size()));
    }
    for (Real s : sigma) {
        if (!(s >= Real(0))) throw std::invalid_argument("sample_gaussian: sigma must be non-negative");
    }
    Vec out(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        out[i] = mu[i] + sigma[i] * static_cast<Real>(rng.normal());
    }
    return out;
}

}  // namespace dscmp
