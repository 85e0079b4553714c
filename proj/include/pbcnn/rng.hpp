#pragma once

#include <cstdint>
#include <random>

namespace pbcnn {

using Rng = std::mt19937_64;

/// Default seed used whenever the caller does not supply one.
inline constexpr std::uint64_t kDefaultSeed = 20211015;

/// Independent random streams derived from one user seed.
enum class Stream : std::uint64_t {
  Init = 1,
  Shuffle = 2,
  Sampling = 3,
  Augment = 4,
  Synthetic = 5,
  Evaluation = 6,
  Gradcheck = 7,
};

/// splitmix64 finalizer over (seed, stream, index).
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(stream) + 1) +
                    0xD1B54A32D192ED03ull * index;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

}  // namespace pbcnn
