#include "cni/embeddings.hpp"

#include <algorithm>

#include "cni/errors.hpp"

namespace cni {

void EmbeddingDataset::validate() const {
  if (tokens.ndim() != 3)
    throw Error(ErrorCode::ShapeMismatch, "token tensor must be (M, T, D), got " + shape_string(tokens.shape));
  const auto m = tokens.dim(0);
  if (m < 1 || tokens.dim(1) < 1 || tokens.dim(2) < 1)
    throw Error(ErrorCode::ShapeMismatch, "empty token tensor " + shape_string(tokens.shape));
  if (labels.size() != m)
    throw Error(ErrorCode::ShapeMismatch,
                std::to_string(labels.size()) + " labels for " + std::to_string(m) + " examples");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(labels[i]) + " at example " +
                                                  std::to_string(i) + " outside [0, " +
                                                  std::to_string(classes) + ")");
  }
  if (!all_finite(tokens.data)) throw Error(ErrorCode::NonFiniteValue, "token tensor has non-finite entries");
}

Tensor gather_tokens(const EmbeddingDataset& ds, const std::vector<std::size_t>& indices) {
  const auto t = ds.tokens_per_example();
  const auto d = ds.dim();
  const auto stride = t * d;
  std::vector<float> out;
  out.reserve(indices.size() * stride);
  for (const auto i : indices) {
    if (i >= ds.size()) throw Error(ErrorCode::ShapeMismatch, "example index " + std::to_string(i) + " out of range");
    const auto first = ds.tokens.data.begin() + static_cast<std::ptrdiff_t>(i * stride);
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(stride));
  }
  return Tensor({indices.size(), t, d}, std::move(out));
}

EmbeddingDataset subset(const EmbeddingDataset& ds, const std::vector<std::size_t>& indices) {
  EmbeddingDataset out;
  out.tokens = gather_tokens(ds, indices);
  out.classes = ds.classes;
  out.labels.reserve(indices.size());
  for (const auto i : indices) out.labels.push_back(ds.labels[i]);
  return out;
}

void TextEmbeddingBank::validate(std::size_t min_classes) const {
  if (embeddings.ndim() != 3)
    throw Error(ErrorCode::ShapeMismatch, "bank must be (N, C, D), got " + shape_string(embeddings.shape));
  if (prompts() < 1 || classes() < min_classes || dim() < 1)
    throw Error(ErrorCode::ShapeMismatch, "bank needs N >= 1, C >= " + std::to_string(min_classes) +
                                              ", D >= 1, got " + shape_string(embeddings.shape));
  if (!prompt_templates.empty() && prompt_templates.size() != prompts())
    throw Error(ErrorCode::ShapeMismatch, "prompt template count does not match N");
  if (!class_names.empty() && class_names.size() != classes())
    throw Error(ErrorCode::ShapeMismatch, "class name count does not match C");
  if (!all_finite(embeddings.data)) throw Error(ErrorCode::NonFiniteValue, "bank has non-finite entries");
}

}  // namespace cni
