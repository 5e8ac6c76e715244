#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "fdsic/numeric.hpp"

namespace fdsic {

using RngStream = std::mt19937_64;

namespace detail {
// FNV-1a, stable across platforms and runs.
constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}
}  // namespace detail

/// Independent random stream keyed by (master seed, purpose label).
/// Streams never depend on the order in which they are created.
inline RngStream make_stream(std::uint64_t master_seed, std::string_view label) {
    const std::uint64_t h = detail::fnv1a(label);
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                      static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return RngStream(seq);
}

/// Circularly-symmetric complex Gaussian with E|w|^2 = variance.
inline cplx complex_gaussian(RngStream& rng, double variance) {
    std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

inline double real_gaussian(RngStream& rng, double mean, double variance) {
    std::normal_distribution<double> n(mean, std::sqrt(variance));
    return n(rng);
}

}  // namespace fdsic
