#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cni/embeddings.hpp"

namespace cni {

/// Either k examples per class or a fraction of every class (rounded up, so
/// each class keeps at least one example).
struct ShotSpec {
  std::optional<std::size_t> k;
  std::optional<double> fraction;
  std::uint64_t seed = 0;

  static ShotSpec shots(std::size_t k, std::uint64_t seed) { return {k, std::nullopt, seed}; }
  static ShotSpec portion(double fraction, std::uint64_t seed) { return {std::nullopt, fraction, seed}; }

  void validate() const;
};

/// Deterministic class-stratified subsample. Classes are visited in ascending
/// order; each class's example indices (ascending) are Fisher-Yates shuffled
/// with one shared Rng(seed, streams::kShotSampling) and the first k kept.
/// The result is grouped by class in that order.
std::vector<std::size_t> sample_k_shot(const EmbeddingDataset& ds, const ShotSpec& spec);

struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t dim = 32;
  std::size_t tokens = 4;
  std::size_t train_per_class = 50;
  std::size_t test_per_class = 50;
  std::size_t prompts = 8;
  double img_noise = 0.35;
  double txt_noise = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  EmbeddingDataset train;
  EmbeddingDataset test;
  TextEmbeddingBank bank;
};

/// Class prototypes uniform on the unit sphere; image tokens and prompt text
/// embeddings are normalize(prototype + isotropic gaussian noise). Examples are
/// stored class-major. Every class draws from its own substream so classes can
/// be generated independently.
SyntheticData make_synthetic(const SyntheticSpec& spec);

/// The L2-normalized class prototypes make_synthetic used for `spec`.
std::vector<std::vector<double>> synthetic_prototypes(const SyntheticSpec& spec);

/// Writes train_tokens, train_labels, test_tokens, test_labels and bank as
/// CNIT files plus manifest.json (splits "train" and "test", generator
/// parameters under "generator") into `dir`. Returns the manifest path.
std::filesystem::path save_synthetic(const std::filesystem::path& dir, const SyntheticData& data,
                                     const SyntheticSpec& spec);

}  // namespace cni
