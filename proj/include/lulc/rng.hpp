#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace lulc {

/// Deterministic, platform-independent random generator (splitmix64).
/// Every seeded behaviour in the library (weight init, shuffles, SVM
/// sampling) draws from this type so that identical seeds reproduce
/// identical bits on any machine.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t mask = ~0ull;
        if (n <= 1) return 0;
        std::uint64_t limit = n - 1;
        mask >>= __builtin_clzll(limit);
        for (;;) {
            std::uint64_t r = next() & mask;
            if (r < n) return r;
        }
    }

    /// Standard normal via Box-Muller.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    /// Fisher-Yates shuffle with a fixed, portable draw sequence.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

/// Derives an independent stream from (seed, tag). Used to give each
/// weight blob / subsystem its own reproducible stream regardless of
/// initialization order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    Rng r(seed ^ h);
    return r.next();
}

}  // namespace lulc
