#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace kgc {

// splitmix64 stream. Self-contained so that results are identical across
// standard libraries and platforms; std distributions are not portable.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Gaussian via Box-Muller with a cached spare.
    double normal(double mu = 0.0, double sd = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mu + sd * spare_;
        }
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586477 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mu + sd * r * std::cos(theta);
    }

    // Unbiased integer in [0, n) by masked rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        std::uint64_t mask = n - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        mask |= mask >> 32;
        std::uint64_t r = next_u64() & mask;
        while (r >= n) r = next_u64() & mask;
        return r;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = std::size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derives a subsystem seed from the experiment seed and a fixed label, so
// that all randomness fans out from one root seed.
inline std::uint64_t seed_for(std::uint64_t base, std::string_view label) {
    std::uint64_t h = 14695981039346656037ULL ^ base;
    for (char c : label) {
        h ^= std::uint64_t(static_cast<unsigned char>(c));
        h *= 1099511628211ULL;
    }
    h ^= base >> 32;
    h *= 0x9E3779B97F4A7C15ULL;
    return h;
}

}  // namespace kgc
