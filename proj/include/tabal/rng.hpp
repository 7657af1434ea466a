#pragma once

// Seeded randomness with results that do not depend on the standard library
// implementation: mt19937_64 is fully specified, and the bounded/real draws
// below are defined here rather than through <random> distributions.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

namespace tabal {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Incremental 64-bit hash used for seed derivation and config fingerprints.
class Hasher {
public:
    Hasher& add(std::uint64_t v) {
        state_ = splitmix64(state_ ^ splitmix64(v));
        return *this;
    }

    Hasher& add(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        add(static_cast<std::uint64_t>(s.size()));
        return add(h);
    }

    std::uint64_t value() const { return splitmix64(state_); }

private:
    std::uint64_t state_ = 0x243f6a8885a308d3ULL;
};

template <typename... Parts>
std::uint64_t hash64(const Parts&... parts) {
    Hasher h;
    (h.add(parts), ...);
    return h.value();
}

/// Uniform integer in [0, n) by rejection; n must be > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = Rng::max() - (Rng::max() % n);
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit && limit != 0);
    return r % n;
}

/// Uniform real in [0, 1) with 53 random bits.
inline double uniform_real(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform sample of `count` distinct values from [0, n), in draw order.
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t count) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    if (count > n) count = n;
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
        std::swap(perm[i], perm[j]);
    }
    perm.resize(count);
    return perm;
}

template <typename T>
void shuffle(Rng& rng, std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

inline double standard_normal(Rng& rng) {
    // Box-Muller; discards the second variate.
    double u1;
    do {
        u1 = uniform_real(rng);
    } while (u1 <= 0.0);
    const double u2 = uniform_real(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace tabal
