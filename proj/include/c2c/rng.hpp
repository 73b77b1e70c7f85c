#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "c2c/errors.hpp"

namespace c2c {

// Named sub-streams derived from the single run seed. Every consumer of
// randomness pulls from derive_rng(seed, stream, a, b) so that results are
// reproducible and independent of evaluation order or thread count.
enum class Stream : std::uint64_t {
    kParamInit = 1,
    kDataGen = 2,
    kCluster = 3,
    kSample = 4,
    kShuffle = 5,
    kValSplit = 6,
    kGradCheck = 7,
    kTest = 99,
};

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// SplitMix64 generator. Small, fast and fully portable: the same seed yields
// the same sequence on every platform, which the determinism contracts rely on.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ArgumentError("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Box-Muller. Two uniforms per draw keeps the stream position predictable.
    double normal(double mean, double stddev) {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& xs) {
        for (std::size_t i = xs.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(xs[i - 1], xs[j]);
        }
    }

  private:
    std::uint64_t state_;
};

// Fan a run seed out into an independent sub-stream labelled by
// (stream id, a, b) -- e.g. (kCluster, bag_id, epoch).
inline Rng derive_rng(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t s = mix64(seed ^ 0xC2C0C2C0C2C0C2C0ULL);
    s = mix64(s ^ static_cast<std::uint64_t>(stream));
    s = mix64(s ^ a);
    s = mix64(s ^ b);
    return Rng(s);
}

} // namespace c2c
