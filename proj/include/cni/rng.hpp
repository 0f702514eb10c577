#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace cni {

/// One step of the splitmix64 generator; advances `state` and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state);

/// xorshift64* stream seeded through splitmix64. The only randomness source in
/// the library; each consumer uses its own (seed, stream id) substream. None of
/// the helpers delegate to <random>.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next();

  /// Uniform integer in [0, n) as next() % n. n must be > 0.
  std::uint64_t bounded(std::uint64_t n);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via Box-Muller (cosine branch only, two draws per sample).
  double normal();

  /// In-place Fisher-Yates shuffle: for i = n-1 .. 1, swap(i, bounded(i + 1)).
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(bounded(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Documented substream ids.
namespace streams {
inline constexpr std::uint64_t kShotSampling = 0;
inline constexpr std::uint64_t kPrototypes = 1;
inline constexpr std::uint64_t kTrainTokens = 2;
inline constexpr std::uint64_t kTestTokens = 3;
inline constexpr std::uint64_t kTextEmbeddings = 4;
inline constexpr std::uint64_t kHeadInit = 5;
inline constexpr std::uint64_t kLabeledBatches = 6;
inline constexpr std::uint64_t kUnlabeledBatches = 7;
inline constexpr std::uint64_t kHeadRowSelection = 8;
}  // namespace streams

}  // namespace cni
