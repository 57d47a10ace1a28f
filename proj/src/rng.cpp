#include "sdebf/rng.hpp"

namespace sdebf {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
    return base ^ splitmix64(index);
}

double Rng::uniform() {
    // 53 random mantissa bits.
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

}  // namespace sdebf
