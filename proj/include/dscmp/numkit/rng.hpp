#ifndef DSCMP_NUMKIT_RNG_HPP_
#define DSCMP_NUMKIT_RNG_HPP_

#include <cstdint>
#include <random>
#include <span>

#include "dscmp/numkit/tensor.hpp"

namespace dscmp {

/// Deterministic random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard for a given seed. Everything derived from it is computed here
/// rather than through <random> distributions, whose algorithms are
/// implementation-defined:
///   - uniform():       top 53 bits of one draw, scaled to [0, 1)
///   - uniform_index(): rejection sampling on one draw per attempt
///   - normal():        Box-Muller on two uniform() draws, cosine branch only
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    /// Uniform integer in [0, n); n must be positive.
    std::size_t uniform_index(std::size_t n);
    double normal();

    /// A child stream seeded from the next draw of this one.
    Rng split() { return Rng(next_u64()); }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

/// mu + sigma * eps with eps ~ N(0, I). Throws on negative sigma or width mismatch.
Vec sample_gaussian(Rng& rng, std::span<const Real> mu, std::span<const Real> sigma);

/// Fisher-Yates shuffle driven by uniform_index().
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_index(i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace dscmp

#endif  // DSCMP_NUMKIT_RNG_HPP_
