#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace vipcap {

/// FNV-1a over raw bytes. Stable across platforms and runs.
std::uint64_t stable_hash(std::span<const std::byte> bytes) noexcept;
std::uint64_t stable_hash(std::string_view text) noexcept;

/// Mixes two 64-bit values (splitmix64 finalizer over a combined word).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

/// Explicit, splittable random stream. Children are derived by hashing the
/// parent seed with a label, so a child never depends on how many draws the
/// parent has made.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    Rng split(std::string_view label) const { return Rng(mix_seed(seed_, stable_hash(label))); }
    Rng split(std::uint64_t index) const { return Rng(mix_seed(seed_, index + 0x9e3779b97f4a7c15ULL)); }

    double normal() { return normal_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }
    std::uint64_t next() { return engine_(); }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace vipcap
