#pragma once

#include "cdpf/linalg.hpp"

#include <cstdint>
#include <random>

namespace cdpf {

using Rng = std::mt19937_64;

/// Purpose tags mixed into derived seeds so that streams used for different
/// jobs at the same (step, particle) coordinate never coincide.
enum class StreamPurpose : std::uint64_t {
  kInitial = 1,
  kPropagate = 2,
  kResample = 3,
  kSimulate = 4,
  kMeasurement = 5,
  kPredict = 6,
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Counter-based seed derivation: the seed for (master, purpose, step, index)
/// depends only on those four numbers, never on evaluation order.
std::uint64_t derive_seed(std::uint64_t master, StreamPurpose purpose, std::uint64_t step,
                          std::uint64_t index) noexcept;

Rng make_stream(std::uint64_t master, StreamPurpose purpose, std::uint64_t step,
                std::uint64_t index);

/// Vector of iid standard normal draws.
Vector standard_normal(Eigen::Index n, Rng& rng);

}  // namespace cdpf
