#pragma once

#include <cstddef>
#include <vector>

#include "cni/embeddings.hpp"
#include "cni/model.hpp"
#include "cni/train.hpp"

namespace cni::detail {

struct UnlabeledPool {
  const EmbeddingDataset* data = nullptr;
  std::vector<double> teacher_probs;  // (M_u, C) at the distillation temperature
  std::size_t batch_size = 0;
};

TrainResult run_training(const ModelParams& params0, const EmbeddingDataset& train_ds,
                         const EmbeddingDataset& test_ds, const TrainConfig& cfg, const UnlabeledPool* pool);

}  // namespace cni::detail
