#include "pibsde/rng.hpp"

namespace pibsde {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::mt19937_64 RngSpec::engine() const {
    const std::uint64_t h = splitmix64(splitmix64(splitmix64(seed) ^ path_index) ^ static_cast<std::uint64_t>(role));
    std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(path_index), static_cast<std::uint32_t>(role)};
    return std::mt19937_64(seq);
}

std::uint64_t RngSpec::derive(std::uint64_t salt) const noexcept {
    return splitmix64(splitmix64(seed ^ 0x5851f42d4c957f2dULL) + splitmix64(salt) + path_index);
}

}  // namespace pibsde
