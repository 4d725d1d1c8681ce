#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace flightpref {

/// splitmix64 finalizer. Used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for parallel stream `stream` of a run seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the sampling helpers below are written
// out by hand because the std distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t uniform_int(std::uint64_t n);

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01();

    bool bernoulli(double p) { return uniform01() < p; }

    /// Index drawn proportionally to nonnegative `weights`.
    std::size_t categorical(std::span<const double> weights);

    /// Standard normal via Box-Muller.
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Independent generator for sub-stream `stream`.
    Rng split(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace flightpref
