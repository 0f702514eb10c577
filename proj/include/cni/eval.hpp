#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cni/embeddings.hpp"
#include "cni/model.hpp"

namespace cni {

struct EvalReport {
  std::size_t classes = 0;
  double top1 = 0.0;
  std::vector<double> per_class;                   // recall per true class; 0 for classes without examples
  std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]
  std::vector<int> predictions;                    // per example

  /// Recomputes the summary fields from `predictions` and `labels`.
  static EvalReport from_predictions(std::vector<int> predictions, const std::vector<int>& labels,
                                     std::size_t classes);
};

/// Top-1 accuracy of the model; argmax ties go to the lowest class index.
EvalReport top1(const ModelParams& params, const EmbeddingDataset& ds);

/// Zero-shot cosine classifier: argmax over classes of cos(mean token, averaged
/// text embedding). Same tie rule as top1.
EvalReport zero_shot(const TextEmbeddingBank& bank, const EmbeddingDataset& ds);

/// JSON object with classes, top1, per_class, confusion (predictions omitted).
std::string to_json(const EvalReport& report, int indent = 2);

}  // namespace cni
