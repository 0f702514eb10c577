#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cni/dataset.hpp"
#include "cni/embeddings.hpp"
#include "cni/headinit.hpp"
#include "cni/model.hpp"
#include "cni/optim.hpp"

namespace cni {

/// Initial learning rates for the two head initializations at desk scale.
inline constexpr double kDefaultLrCategoryNames = 1e-5;
inline constexpr double kDefaultLrRandom = 5e-5;

struct TrainConfig {
  ShotSpec shots = ShotSpec::shots(1, 0);
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  /// total_steps is derived from epochs and the batch count; the field is overwritten.
  ScheduleConfig schedule;
  LossConfig loss;
  FreezePolicy policy = FreezePolicy::PoolerLinear;
  AdafactorOptions optimizer;
  std::uint64_t seed = 0;
  std::size_t eval_every = 10;

  void validate() const;
};

struct MetricRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double lr = 0.0;
  LossTerms loss;
  double test_top1 = 0.0;
};

struct MetricHistory {
  std::vector<MetricRecord> records;

  /// Columns: epoch,step,lr,loss_ce,loss_anchor,loss_distill,test_top1
  std::string to_csv() const;
  std::string to_json(int indent = 2) const;
};

struct TrainResult {
  ModelParams params;
  MetricHistory history;
  std::vector<std::size_t> train_indices;  // rows of the training set that were used

  double final_top1() const { return history.records.empty() ? 0.0 : history.records.back().test_top1; }
};

/// Fine-tunes params0 on the cfg.shots subsample of train_ds.
///
/// Each epoch shuffles the subsample with Rng(cfg.seed, streams::kLabeledBatches)
/// and walks it in batches (the last one may be short). The anchor for the L2
/// term is params0. Metrics are recorded at epoch 0 (before any update), every
/// eval_every epochs, and at the final epoch; the loss columns are evaluated on
/// the whole training subsample with the parameters at that point.
TrainResult train(const ModelParams& params0, const EmbeddingDataset& train_ds, const EmbeddingDataset& test_ds,
                  const TrainConfig& cfg);

struct SweepVariant {
  std::string name;
  HeadInitSpec init;
  TrainConfig config;
  double logit_scale = kDefaultLogitScale;
};

struct SweepRow {
  std::string name;
  bool ok = false;
  double initial_top1 = 0.0;
  double final_top1 = 0.0;
  std::string error;
};

/// Runs every variant independently (head init + train) and returns rows in
/// input order. A failing variant yields ok = false with the error message;
/// the remaining variants still run. `threads` > 1 runs variants concurrently.
std::vector<SweepRow> sweep(const std::vector<SweepVariant>& variants, const EmbeddingDataset& train_ds,
                            const EmbeddingDataset& test_ds, const TextEmbeddingBank* bank, std::size_t threads = 1);

/// Columns: name,init,text_fraction,shots,policy,base_lr,anchor_lambda,seed,status,initial_top1,final_top1
std::string sweep_to_csv(const std::vector<SweepVariant>& variants, const std::vector<SweepRow>& rows);

}  // namespace cni
