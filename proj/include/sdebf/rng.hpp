#pragma once

#include <cstdint>
#include <random>

namespace sdebf {

// splitmix64 finalizer; used as the index hash for derived seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// seed_i = base XOR hash(i): adding streams never perturbs earlier ones.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

// Owned, seeded random source. Not thread-safe; give each task its own.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double normal(double mean, double sd) { return mean + sd * normal_(engine_); }
    // Uniform on [0, 1).
    double uniform();
    std::uint64_t next_u64() { return engine_(); }
    bool coin() { return (engine_() >> 63) != 0; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace sdebf
