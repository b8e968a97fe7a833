#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tpool {

// Seeded random stream. Every consumer (init, shuffle, dropout, masking,
// data generation) takes its own child stream derived from one root seed,
// so adding a consumer never perturbs the draws seen by another.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    // Derives an independent stream keyed by (this seed, tag).
    Rng child(std::string_view tag) const {
        return Rng(mix(seed_ ^ fnv1a(tag)));
    }

    std::mt19937_64& engine() { return engine_; }
    std::uint64_t seed() const { return seed_; }

    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(engine_);
    }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    bool bernoulli(double p) {
        return uniform() < p;
    }

private:
    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 1469598103934665603ull;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return h;
    }

    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace tpool
