#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cni/tensor.hpp"

namespace cni {

/// M examples x T image tokens x D, with integer labels in [0, C).
struct EmbeddingDataset {
  Tensor tokens;  // (M, T, D)
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return tokens.ndim() == 3 ? tokens.dim(0) : 0; }
  std::size_t tokens_per_example() const { return tokens.dim(1); }
  std::size_t dim() const { return tokens.dim(2); }

  /// Throws ShapeMismatch / LabelOutOfRange / NonFiniteValue on violated invariants.
  void validate() const;
};

/// Rows `indices` of `ds`, in the given order.
EmbeddingDataset subset(const EmbeddingDataset& ds, const std::vector<std::size_t>& indices);

/// Token tensor (B, T, D) for the given rows.
Tensor gather_tokens(const EmbeddingDataset& ds, const std::vector<std::size_t>& indices);

/// N prompts x C classes x D text embeddings. Template and class strings are metadata only.
struct TextEmbeddingBank {
  Tensor embeddings;  // (N, C, D)
  std::vector<std::string> prompt_templates;
  std::vector<std::string> class_names;

  std::size_t prompts() const { return embeddings.dim(0); }
  std::size_t classes() const { return embeddings.dim(1); }
  std::size_t dim() const { return embeddings.dim(2); }

  /// A classifier bank needs C >= 2; averaging alone is defined for C >= 1.
  void validate(std::size_t min_classes = 2) const;
};

}  // namespace cni
