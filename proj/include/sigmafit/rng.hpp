// Seeded PRNG for deterministic estimation and simulation.
//
// All randomness in the library flows through Xoshiro256** seeded via
// SplitMix64. std::random distributions are implementation-defined, so the
// uniform/gaussian transforms are spelled out here; given the same seed the
// whole pipeline produces identical results on any platform.
//
// Seed discipline: a single master seed per run. Sub-tasks (RANSAC iteration
// k, train/val split k, pair j, scene i, ...) draw their own seed through
// derive_seed(master, stream, index), so any sub-computation is reproducible
// in isolation and independent of execution order.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace sigmafit {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Stream identifiers for derive_seed. Values are arbitrary but fixed; they
// are part of the reproducibility contract.
enum class SeedStream : std::uint64_t {
    RansacSample = 1,
    TrainValSplit = 2,
    InnerRansac = 3,
    MultiPair = 4,
    Scene = 5,
    SceneRetry = 6,
    Estimator = 7,
    Evaluation = 8,
};

inline std::uint64_t derive_seed(std::uint64_t base, SeedStream stream, std::uint64_t index) {
    std::uint64_t s = base;
    std::uint64_t a = splitmix64(s);
    s ^= static_cast<std::uint64_t>(stream) * 0xD1342543DE82EF95ULL;
    std::uint64_t b = splitmix64(s);
    s ^= index * 0xAF251AF3B0F025B5ULL + 0x9E3779B97F4A7C15ULL;
    return a ^ b ^ splitmix64(s);
}

// Xoshiro256** by Blackman & Vigna (public domain reference implementation).
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t sm = seed;
        for (auto& word : state_)
            word = splitmix64(sm);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Uniform integer in [0, n). Multiply-shift; bias is O(n / 2^64).
    std::uint64_t uniform_below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(next()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // One pair of independent standard normals (Box-Muller).
    std::pair<double, double> gaussian_pair() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(a), r * std::sin(a)};
    }

    double gaussian() { return gaussian_pair().first; }

    // k distinct indices from [0, n), sampled by partial Fisher-Yates.
    // Order within the sample is part of the deterministic output.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i)
            idx[i] = i;
        for (std::size_t i = 0; i < k && i < n; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_below(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k < n ? k : n);
        return idx;
    }

    // Full Fisher-Yates shuffle of [0, n).
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i)
            idx[i] = i;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_below(n - i));
            std::swap(idx[i], idx[j]);
        }
        return idx;
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
};

}  // namespace sigmafit
