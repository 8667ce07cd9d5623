#pragma once

#include <cstdint>
#include <random>

namespace synthamt {

// splitmix64 finalizer; derives independent substream seeds from (master, index).
inline uint64_t mix_seed(uint64_t master, uint64_t index) {
    uint64_t z = master + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Seeded RNG wrapper. One instance per logical stream; never shared across
// threads. Draw order within a consumer is part of its documented contract.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }
    // inclusive bounds
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return std::uniform_int_distribution<int64_t>(lo, hi)(gen_);
    }
    double gaussian(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(gen_);
    }
    bool bernoulli(double p) { return std::bernoulli_distribution(p)(gen_); }

    // Child stream independent of this one's future draws.
    Rng split(uint64_t index) { return Rng(mix_seed(gen_(), index)); }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

// Per-example worker stream derived from the run's master seed.
inline Rng rng_for_example(uint64_t master_seed, uint64_t example_index) {
    return Rng(mix_seed(master_seed, example_index));
}

} // namespace synthamt
