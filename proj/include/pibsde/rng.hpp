#pragma once

#include <cstdint>
#include <random>

namespace pibsde {

enum class StreamRole : std::uint8_t { kFactorNoise = 1, kAssetNoise = 2, kInnerBranch = 3 };

// Identifies one random stream. Distinct (seed, path_index, role) triples are
// hashed through splitmix64 into independent mt19937_64 seeds.
struct RngSpec {
    std::uint64_t seed = 0;
    std::uint64_t path_index = 0;
    StreamRole role = StreamRole::kFactorNoise;

    [[nodiscard]] std::mt19937_64 engine() const;
    [[nodiscard]] RngSpec with_role(StreamRole r) const noexcept { return {seed, path_index, r}; }
    [[nodiscard]] RngSpec with_path(std::uint64_t p) const noexcept { return {seed, p, role}; }
    // New base seed for a nested experiment (for example one checkpoint of a nested estimator).
    [[nodiscard]] std::uint64_t derive(std::uint64_t salt) const noexcept;
};

[[nodiscard]] std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace pibsde
