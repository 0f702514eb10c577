#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "cni/dataset.hpp"
#include "cni/distill.hpp"
#include "cni/headinit.hpp"
#include "cni/model.hpp"
#include "cni/train.hpp"

namespace cni::benchmark {

/// Seeds of the reference synthetic benchmark.
inline constexpr std::array<std::uint64_t, 5> kSeeds = {11, 23, 37, 41, 53};

/// C=10, D=32, T=4, 50 train and 50 test examples per class, 8 prompts,
/// image noise 0.35, text noise 0.15.
SyntheticSpec reference_spec(std::uint64_t seed);

/// Training recipe for the directional checks on the reference benchmark:
/// learning rates 100x the library defaults (same 1:5 text/random ratio),
/// label smoothing off.
struct Recipe {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::size_t eval_every = 10;
  double lr_category_names = 1e-3;
  double lr_random = 5e-3;
  double lr_partial = 5e-3;
  double label_smoothing = 0.0;
  double partial_fraction = 0.5;
  double anchor_lambda = 0.1;
  double distill_weight = 2.0;
  double distill_temperature = 1.0;
  FreezePolicy policy = FreezePolicy::PoolerLinear;

  double lr_for(HeadInitMode mode) const;
};

/// TrainConfig for `mode` with the recipe's settings. No anchor, no distillation.
TrainConfig train_config(const Recipe& recipe, HeadInitMode mode, const ShotSpec& shots, std::uint64_t seed);

/// Teacher for the distillation check: CNI head, trained on every training example.
TrainConfig teacher_config(const Recipe& recipe, std::uint64_t seed);

/// One-shot CNI student trained with all groups; `distill_weight` 0 gives the plain arm.
DistillConfig student_config(const Recipe& recipe, std::uint64_t seed, double distill_weight);

/// Identity adapter, zero query, head initialized per `mode` from the bank's averaged text embeddings.
ModelParams initial_params(const TextEmbeddingBank& bank, HeadInitMode mode, std::uint64_t seed,
                           double partial_fraction = 0.5);

}  // namespace cni::benchmark
