#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace hcbr {

// std::mt19937_64 output is pinned by the standard, but the standard
// distributions are not; these helpers keep every stochastic code path
// bit-reproducible across standard libraries.

inline double rand_unit(std::mt19937_64& rng) {
    // 53 uniform mantissa bits in [0, 1)
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::uint64_t rand_below(std::mt19937_64& rng, std::uint64_t n) {
    return rng() % n;  // modulo bias is irrelevant at our scales
}

inline double rand_normal(std::mt19937_64& rng) {
    // Box-Muller; two fresh uniforms per call, no cached spare.
    double u1 = rand_unit(rng);
    double u2 = rand_unit(rng);
    while (u1 <= 0.0) u1 = rand_unit(rng);
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

template <typename T>
void shuffle_vec(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rand_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace hcbr
