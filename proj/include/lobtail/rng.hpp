#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace lobtail {

/// Counter-based generator: output k of stream s is mix(key(seed, s) + k * golden).
/// Streams are independent of the order in which they are consumed, so
/// per-scenario streams give reproducible parallel simulation.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(mix(mix(seed ^ 0x6a09e667f3bcc909ULL) + stream * 0xbb67ae8584caa73bULL)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        ++counter_;
        return mix(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
    }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

private:
    static constexpr std::uint64_t mix(std::uint64_t z) noexcept
    {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Inverse Gaussian IG(mean, shape) draw (Michael, Schucany & Haas transformation).
template <typename Rng>
double sample_inverse_gaussian(Rng& rng, double mean, double shape)
{
    std::normal_distribution<double> normal;
    const double nu = normal(rng);
    const double y = nu * nu;
    const double m = mean;
    const double x = m + m * m * y / (2.0 * shape) -
                     m / (2.0 * shape) * std::sqrt(4.0 * m * shape * y + m * m * y * y);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return (u <= m / (m + x)) ? x : m * m / x;
}

}  // namespace lobtail
