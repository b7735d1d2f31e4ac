#pragma once

#include <cstdint>
#include <random>

namespace kflearn {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Sub-seed derivation used everywhere a run fans out into independent
/// streams: derive_seed(s, i) = splitmix64(s ^ splitmix64(i + 0x9E3779B97F4A7C15)).
/// Nested streams chain the call, e.g. derive_seed(derive_seed(seed, iter), j).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

using Rng = std::mt19937_64;

}  // namespace kflearn
