#include "cni/train.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "cni/errors.hpp"
#include "cni/eval.hpp"
#include "cni/rng.hpp"
#include "training_loop.hpp"

namespace cni {

namespace {

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// Loss terms of the current parameters over the whole labeled set (and pool).
LossTerms full_pass_loss(const ModelParams& params, const ModelParams& anchor, const EmbeddingDataset& labeled,
                         const TrainConfig& cfg, const detail::UnlabeledPool* pool) {
  const auto cache = forward(params, labeled.tokens);
  if (pool == nullptr) return loss_total(cache, labeled.labels, params, anchor, cfg.loss, cfg.policy);
  const auto ucache = forward(params, pool->data->tokens);
  const DistillTarget target{&ucache, pool->teacher_probs};
  return loss_total(cache, labeled.labels, params, anchor, cfg.loss, cfg.policy, &target);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  shots.validate();
  loss.validate();
  optimizer.validate();
  if (batch_size < 1) throw Error(ErrorCode::ConfigError, "batch_size must be >= 1");
  if (eval_every < 1) throw Error(ErrorCode::ConfigError, "eval_every must be >= 1");
  if (!(schedule.base_lr > 0.0) || !(schedule.min_lr >= 0.0))
    throw Error(ErrorCode::ConfigError, "learning rates must be positive");
}

std::string MetricHistory::to_csv() const {
  std::string out = "epoch,step,lr,loss_ce,loss_anchor,loss_distill,test_top1\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + fmt(r.lr) + "," + fmt(r.loss.ce) + "," +
           fmt(r.loss.anchor) + "," + fmt(r.loss.distill) + "," + fmt(r.test_top1) + "\n";
  }
  return out;
}

std::string MetricHistory::to_json(int indent) const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    arr.push_back({{"epoch", r.epoch},
                   {"step", r.step},
                   {"lr", r.lr},
                   {"loss_ce", r.loss.ce},
                   {"loss_anchor", r.loss.anchor},
                   {"loss_distill", r.loss.distill},
                   {"test_top1", r.test_top1}});
  }
  return nlohmann::json{{"records", arr}}.dump(indent);
}

namespace detail {

TrainResult run_training(const ModelParams& params0, const EmbeddingDataset& train_ds,
                         const EmbeddingDataset& test_ds, const TrainConfig& cfg, const UnlabeledPool* pool) {
  cfg.validate();
  params0.validate();
  train_ds.validate();
  test_ds.validate();
  if (train_ds.classes != params0.classes || test_ds.classes != params0.classes)
    throw Error(ErrorCode::ShapeMismatch, "dataset class count does not match the model");
  if (train_ds.dim() != params0.dim || test_ds.dim() != params0.dim)
    throw Error(ErrorCode::ShapeMismatch, "dataset embedding dim does not match the model");

  TrainResult result;
  result.train_indices = sample_k_shot(train_ds, cfg.shots);
  const auto labeled = subset(train_ds, result.train_indices);
  const auto n = labeled.size();
  const auto batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

  ScheduleConfig schedule = cfg.schedule;
  schedule.total_steps = std::max<std::uint64_t>(1, cfg.epochs * batches_per_epoch);
  if (cfg.epochs > 0) schedule.validate();

  const ModelParams anchor = params0;
  ModelParams params = params0;
  AdafactorState opt_state;

  auto record = [&](std::size_t epoch, std::uint64_t step) {
    MetricRecord r;
    r.epoch = epoch;
    r.step = step;
    r.lr = cosine_lr(step == 0 ? 0 : step - 1, schedule);
    r.loss = full_pass_loss(params, anchor, labeled, cfg, pool);
    r.test_top1 = top1(params, test_ds).top1;
    result.history.records.push_back(r);
  };

  record(0, 0);

  Rng batch_rng(cfg.seed, streams::kLabeledBatches);
  Rng pool_rng(cfg.seed, streams::kUnlabeledBatches);
  auto order = iota_indices(n);
  std::vector<std::size_t> pool_order;
  std::size_t pool_pos = 0;
  if (pool) pool_order = iota_indices(pool->data->size());
  pool_pos = pool_order.size();  // forces a shuffle on first use

  const auto C = params.classes;
  std::uint64_t step = 0;
  std::vector<int> batch_labels;
  std::vector<std::size_t> batch_idx, pool_idx;
  std::vector<double> pool_teacher;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    batch_rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const auto stop = std::min(n, start + cfg.batch_size);
      batch_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(stop));
      batch_labels.clear();
      for (const auto i : batch_idx) batch_labels.push_back(labeled.labels[i]);
      const auto tokens = gather_tokens(labeled, batch_idx);

      Tensor pool_tokens;
      DistillBatch distill;
      if (pool) {
        pool_idx.clear();
        pool_teacher.clear();
        while (pool_idx.size() < pool->batch_size) {
          if (pool_pos == pool_order.size()) {
            pool_rng.shuffle(std::span<std::size_t>(pool_order));
            pool_pos = 0;
          }
          const auto u = pool_order[pool_pos++];
          pool_idx.push_back(u);
          pool_teacher.insert(pool_teacher.end(), pool->teacher_probs.begin() + static_cast<std::ptrdiff_t>(u * C),
                              pool->teacher_probs.begin() + static_cast<std::ptrdiff_t>((u + 1) * C));
        }
        pool_tokens = gather_tokens(*pool->data, pool_idx);
        distill = {&pool_tokens, pool_teacher};
      }

      const double lr = cosine_lr(step, schedule);
      const auto res = backward(params, tokens, batch_labels, anchor, cfg.loss, cfg.policy, pool ? &distill : nullptr);
      adafactor_step(opt_state, params, res.grads, lr, cfg.optimizer);
      ++step;
    }
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) record(epoch, step);
  }

  result.params = std::move(params);
  return result;
}

}  // namespace detail

TrainResult train(const ModelParams& params0, const EmbeddingDataset& train_ds, const EmbeddingDataset& test_ds,
                  const TrainConfig& cfg) {
  return detail::run_training(params0, train_ds, test_ds, cfg, nullptr);
}

std::vector<SweepRow> sweep(const std::vector<SweepVariant>& variants, const EmbeddingDataset& train_ds,
                            const EmbeddingDataset& test_ds, const TextEmbeddingBank* bank, std::size_t threads) {
  if (variants.empty()) throw Error(ErrorCode::ConfigError, "sweep needs at least one variant");
  std::vector<SweepRow> rows(variants.size());

  auto run_one = [&](std::size_t i) {
    const auto& v = variants[i];
    SweepRow& row = rows[i];
    row.name = v.name;
    try {
      Tensor text;
      if (v.init.mode != HeadInitMode::Random) {
        if (bank == nullptr) throw Error(ErrorCode::ConfigError, "variant needs a text bank");
        text = average_text_embeddings(*bank);
      }
      const auto head = init_head(v.init, v.init.mode != HeadInitMode::Random ? &text : nullptr,
                                  train_ds.classes, train_ds.dim());
      const auto params0 = ModelParams::from_head(head, v.logit_scale);
      const auto res = train(params0, train_ds, test_ds, v.config);
      row.initial_top1 = res.history.records.front().test_top1;
      row.final_top1 = res.final_top1();
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  };

  threads = std::clamp<std::size_t>(threads, 1, variants.size());
  if (threads == 1) {
    for (std::size_t i = 0; i < variants.size(); ++i) run_one(i);
    return rows;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < variants.size(); i += threads) run_one(i);
    });
  for (auto& t : pool) t.join();
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepVariant>& variants, const std::vector<SweepRow>& rows) {
  std::string out = "name,init,text_fraction,shots,policy,base_lr,anchor_lambda,seed,status,initial_top1,final_top1\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = variants.at(i);
    const auto& r = rows[i];
    const std::string shots = v.config.shots.k ? std::to_string(*v.config.shots.k)
                                               : "f" + fmt(v.config.shots.fraction.value_or(0.0));
    const double text_fraction = v.init.mode == HeadInitMode::Random        ? 0.0
                                 : v.init.mode == HeadInitMode::Partial ? v.init.fraction.value_or(0.0)
                                                                        : 1.0;
    out += r.name + "," + to_string(v.init.mode) + "," + fmt(text_fraction) + "," + shots + "," +
           to_string(v.config.policy) + "," + fmt(v.config.schedule.base_lr) + "," +
           fmt(v.config.loss.anchor_lambda) + "," + std::to_string(v.config.seed) + "," + (r.ok ? "ok" : "error") +
           "," + fmt(r.initial_top1) + "," + fmt(r.final_top1) + "\n";
  }
  return out;
}

}  // namespace cni
