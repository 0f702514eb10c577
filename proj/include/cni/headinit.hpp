#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cni/embeddings.hpp"
#include "cni/tensor.hpp"

namespace cni {

/// Row c = normalize(mean over prompts of bank[n, c, :]). Accumulates in double.
/// Throws ZeroNormRow when a class's mean embedding vanishes.
Tensor average_text_embeddings(const TextEmbeddingBank& bank);

enum class HeadInitMode { Random, CategoryNames, Partial };

const char* to_string(HeadInitMode mode);
/// Accepts "random", "cni", "partial" (case-insensitive). ConfigError otherwise.
HeadInitMode parse_head_init_mode(const std::string& s);

struct HeadInitSpec {
  HeadInitMode mode = HeadInitMode::CategoryNames;
  std::optional<double> fraction;  // Partial only, in [0, 1]
  std::uint64_t seed = 0;

  void validate() const;
};

enum class RowSource { Text, Random };

struct Head {
  Tensor weight;  // (C, D), unit-norm rows
  Tensor bias;    // (C), zero at initialization
  std::vector<RowSource> provenance;

  std::size_t text_rows() const;
};

/// Random rows are standard normal draws normalized to unit length, generated
/// for every row in row order from Rng(seed, streams::kHeadInit). Partial mode
/// then overwrites floor(fraction * C) rows, chosen by a Fisher-Yates shuffle of
/// the class indices on Rng(seed, streams::kHeadRowSelection), with the text
/// rows. Hence Partial(1.0) equals CategoryNames and Partial(0.0) equals Random
/// for the same seed.
Head init_head(const HeadInitSpec& spec, const Tensor* text_average, std::size_t classes, std::size_t dim);

}  // namespace cni
