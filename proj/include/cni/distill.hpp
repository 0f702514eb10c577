#pragma once

#include <cstddef>
#include <vector>

#include "cni/embeddings.hpp"
#include "cni/model.hpp"
#include "cni/train.hpp"

namespace cni {

/// Probability rows (B, C) of the frozen teacher at the given temperature.
std::vector<double> teacher_predict(const ModelParams& teacher, const Tensor& tokens, double temperature = 1.0);

struct DistillConfig {
  /// Student training setup; loss.distill_weight and loss.distill_temperature
  /// control the KL term. The freezing policy is forced to All.
  TrainConfig student;
  /// Unlabeled examples per step; 0 means student.batch_size.
  std::size_t unlabeled_batch_size = 0;
};

/// Each step pairs a labeled batch (same stream as train()) with an unlabeled
/// batch drawn from an independent Rng(seed, streams::kUnlabeledBatches)
/// permutation of the pool, reshuffled whenever it is exhausted. Labels of
/// `unlabeled` are ignored. With distill_weight = 0 the result is identical to
/// train() with policy All.
TrainResult distill_train(const ModelParams& teacher, const ModelParams& student0, const EmbeddingDataset& labeled,
                          const EmbeddingDataset& unlabeled, const EmbeddingDataset& test_ds,
                          const DistillConfig& cfg);

}  // namespace cni
