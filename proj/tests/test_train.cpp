#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "cni/benchmark.hpp"
#include "cni/dataset.hpp"
#include "cni/errors.hpp"
#include "cni/eval.hpp"
#include "cni/headinit.hpp"
#include "cni/train.hpp"

using namespace cni;

namespace {

const SyntheticData& bench(std::uint64_t seed = benchmark::kSeeds[0]) {
  static std::map<std::uint64_t, SyntheticData> cache;
  auto it = cache.find(seed);
  if (it == cache.end()) it = cache.emplace(seed, make_synthetic(benchmark::reference_spec(seed))).first;
  return it->second;
}

ModelParams cni_params(const SyntheticData& d) {
  return benchmark::initial_params(d.bank, HeadInitMode::CategoryNames, 0);
}

TrainConfig quick_config(FreezePolicy policy, std::size_t epochs = 20) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.policy = policy;
  cfg.schedule.base_lr = 1e-2;
  cfg.loss.label_smoothing = 0.0;
  cfg.eval_every = 5;
  cfg.seed = 4;
  cfg.shots = ShotSpec::shots(2, 4);
  return cfg;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Train, ZeroEpochsReturnsInitialParams) {
  const auto& d = bench();
  auto cfg = quick_config(FreezePolicy::All, 0);
  const auto p0 = cni_params(d);
  const auto r = train(p0, d.train, d.test, cfg);
  EXPECT_TRUE(bit_equal(r.params, p0));
  ASSERT_EQ(r.history.records.size(), 1u);
  EXPECT_EQ(r.history.records[0].epoch, 0u);
  EXPECT_EQ(r.history.records[0].step, 0u);
}

TEST(Train, LinearPolicyFreezesAdapterAndPooler) {
  const auto& d = bench();
  const auto p0 = cni_params(d);
  const auto r = train(p0, d.train, d.test, quick_config(FreezePolicy::Linear));
  for (auto g : {ParamGroup::AdapterWeight, ParamGroup::AdapterBias, ParamGroup::PoolQuery})
    EXPECT_TRUE(bit_equal(r.params.group(g), p0.group(g))) << to_string(g);
  EXPECT_FALSE(bit_equal(r.params.group(ParamGroup::HeadWeight), p0.group(ParamGroup::HeadWeight)));
  EXPECT_FALSE(bit_equal(r.params.group(ParamGroup::HeadBias), p0.group(ParamGroup::HeadBias)));
}

TEST(Train, PoolerLinearPolicyFreezesAdapter) {
  const auto& d = bench();
  const auto p0 = cni_params(d);
  const auto r = train(p0, d.train, d.test, quick_config(FreezePolicy::PoolerLinear));
  for (auto g : {ParamGroup::AdapterWeight, ParamGroup::AdapterBias})
    EXPECT_TRUE(bit_equal(r.params.group(g), p0.group(g))) << to_string(g);
  for (auto g : {ParamGroup::PoolQuery, ParamGroup::HeadWeight, ParamGroup::HeadBias})
    EXPECT_FALSE(bit_equal(r.params.group(g), p0.group(g))) << to_string(g);
}

TEST(Train, AllPolicyMovesEveryGroup) {
  const auto& d = bench();
  const auto p0 = cni_params(d);
  const auto r = train(p0, d.train, d.test, quick_config(FreezePolicy::All));
  for (auto g : kAllParamGroups) EXPECT_FALSE(bit_equal(r.params.group(g), p0.group(g))) << to_string(g);
}

TEST(Train, EpochZeroAccuracyEqualsZeroShotOracle) {
  for (auto seed : benchmark::kSeeds) {
    const auto& d = bench(seed);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = seed;
    cfg.shots = ShotSpec::shots(1, seed);
    cfg.schedule.base_lr = kDefaultLrCategoryNames;
    const auto r = train(cni_params(d), d.train, d.test, cfg);
    const auto zs = zero_shot(d.bank, d.test);
    EXPECT_EQ(r.history.records.front().test_top1, zs.top1) << seed;
    EXPECT_EQ(top1(cni_params(d), d.test).predictions, zs.predictions) << seed;
  }
}

TEST(Train, DeterministicHistoryAndParams) {
  const auto& d = bench();
  const auto cfg = quick_config(FreezePolicy::All);
  const auto a = train(cni_params(d), d.train, d.test, cfg);
  const auto b = train(cni_params(d), d.train, d.test, cfg);
  EXPECT_TRUE(bit_equal(a.params, b.params));
  EXPECT_EQ(a.history.to_csv(), b.history.to_csv());
  EXPECT_EQ(a.train_indices, b.train_indices);
  auto other = cfg;
  other.seed = 5;
  EXPECT_FALSE(bit_equal(train(cni_params(d), d.train, d.test, other).params, a.params));
}

TEST(Train, AnchorSnapshotIsInitialParamsForEveryPolicy) {
  const auto& d = bench();
  for (auto policy : {FreezePolicy::Linear, FreezePolicy::PoolerLinear, FreezePolicy::All}) {
    auto cfg = quick_config(policy, 10);
    cfg.loss.anchor_lambda = 0.5;
    const auto r = train(cni_params(d), d.train, d.test, cfg);
    EXPECT_EQ(r.history.records.front().loss.anchor, 0.0);
    // Later records measure the distance from params0 over the trainable groups.
    double dist = 0.0;
    const auto p0 = cni_params(d);
    for (auto g : kAllParamGroups) {
      if (!is_trainable(policy, g)) continue;
      const auto a = r.params.group(g), b = p0.group(g);
      for (std::size_t i = 0; i < a.size(); ++i) dist += (a[i] - b[i]) * (a[i] - b[i]);
    }
    EXPECT_NEAR(r.history.records.back().loss.anchor, 0.5 * dist, 1e-9 * (1 + dist));
  }
}

TEST(Train, HugeAnchorHoldsParametersNearInitialization) {
  const auto& d = bench();
  auto cfg = quick_config(FreezePolicy::All, 100);
  cfg.shots = ShotSpec::shots(1, 1);  // 10 examples, batch 32: one step per epoch
  cfg.schedule.base_lr = 1e-4;
  cfg.loss.anchor_lambda = 1e6;
  const auto p0 = benchmark::initial_params(d.bank, HeadInitMode::Random, 3);
  const auto anchored = train(p0, d.train, d.test, cfg);
  cfg.loss.anchor_lambda = 0.0;
  const auto free = train(p0, d.train, d.test, cfg);
  double anchored_drift = 0.0, free_drift = 0.0;
  for (auto g : kAllParamGroups) {
    anchored_drift = std::max(anchored_drift, max_abs_diff(anchored.params.group(g), p0.group(g)));
    free_drift = std::max(free_drift, max_abs_diff(free.params.group(g), p0.group(g)));
  }
  EXPECT_LT(anchored_drift, 1e-3);
  EXPECT_GT(free_drift, anchored_drift);
}

TEST(Train, RecordsAtEvalIntervalsAndFinalEpochWithShortBatches) {
  const auto& d = bench();
  auto cfg = quick_config(FreezePolicy::PoolerLinear, 23);
  cfg.shots = ShotSpec::shots(1, 2);  // 10 examples
  cfg.batch_size = 3;                 // 3 + 3 + 3 + 1
  cfg.eval_every = 10;
  const auto r = train(cni_params(d), d.train, d.test, cfg);
  ASSERT_EQ(r.history.records.size(), 4u);
  const std::size_t epochs[] = {0, 10, 20, 23};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(r.history.records[i].epoch, epochs[i]);
    EXPECT_EQ(r.history.records[i].step, epochs[i] * 4);
  }
  EXPECT_EQ(r.train_indices.size(), 10u);
  const auto csv = r.history.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,step,lr,loss_ce,loss_anchor,loss_distill,test_top1");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Train, RecordedLrFollowsCosineSchedule) {
  const auto& d = bench();
  auto cfg = quick_config(FreezePolicy::Linear, 10);
  cfg.shots = ShotSpec::shots(1, 0);
  const auto r = train(cni_params(d), d.train, d.test, cfg);
  ScheduleConfig s = cfg.schedule;
  s.total_steps = 10;
  EXPECT_DOUBLE_EQ(r.history.records.front().lr, cfg.schedule.base_lr);
  EXPECT_DOUBLE_EQ(r.history.records.back().lr, cosine_lr(9, s));
}

TEST(Train, InvalidConfigsRejected) {
  const auto& d = bench();
  auto code = [&](TrainConfig cfg) {
    try {
      train(cni_params(d), d.train, d.test, cfg);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::WriteError;
  };
  auto cfg = quick_config(FreezePolicy::All, 2);
  cfg.batch_size = 0;
  EXPECT_EQ(code(cfg), ErrorCode::ConfigError);
  cfg = quick_config(FreezePolicy::All, 2);
  cfg.schedule.warmup_steps = 1000;
  EXPECT_EQ(code(cfg), ErrorCode::ConfigError);
  cfg = quick_config(FreezePolicy::All, 2);
  cfg.shots = ShotSpec::shots(51, 0);
  EXPECT_EQ(code(cfg), ErrorCode::InsufficientExamples);
}

TEST(Sweep, SingletonMatchesDirectTrain) {
  const auto& d = bench();
  SweepVariant v;
  v.name = "one";
  v.init = {HeadInitMode::CategoryNames, std::nullopt, 0};
  v.config = quick_config(FreezePolicy::PoolerLinear);
  const auto rows = sweep({v}, d.train, d.test, &d.bank);
  ASSERT_EQ(rows.size(), 1u);
  const auto direct = train(cni_params(d), d.train, d.test, v.config);
  EXPECT_TRUE(rows[0].ok);
  EXPECT_EQ(rows[0].final_top1, direct.final_top1());
  EXPECT_EQ(rows[0].initial_top1, direct.history.records.front().test_top1);
}

TEST(Sweep, IdenticalVariantsGiveIdenticalRowsAcrossThreads) {
  const auto& d = bench();
  SweepVariant v;
  v.init = {HeadInitMode::Random, std::nullopt, 3};
  v.config = quick_config(FreezePolicy::All);
  std::vector<SweepVariant> vs(4, v);
  for (std::size_t i = 0; i < 4; ++i) vs[i].name = "v" + std::to_string(i);
  const auto serial = sweep(vs, d.train, d.test, &d.bank, 1);
  const auto threaded = sweep(vs, d.train, d.test, &d.bank, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(serial[i].final_top1, serial[0].final_top1);
    EXPECT_EQ(threaded[i].final_top1, serial[i].final_top1);
  }
  EXPECT_EQ(sweep_to_csv(vs, serial).substr(sweep_to_csv(vs, serial).find('\n')),
            sweep_to_csv(vs, threaded).substr(sweep_to_csv(vs, threaded).find('\n')));
}

TEST(Sweep, FailingVariantDoesNotStopOthers) {
  const auto& d = bench();
  SweepVariant good;
  good.name = "good";
  good.config = quick_config(FreezePolicy::Linear, 2);
  SweepVariant bad = good;
  bad.name = "bad";
  bad.config.shots = ShotSpec::shots(500, 0);
  const auto rows = sweep({bad, good}, d.train, d.test, &d.bank);
  EXPECT_FALSE(rows[0].ok);
  EXPECT_NE(rows[0].error.find("InsufficientExamples"), std::string::npos);
  EXPECT_TRUE(rows[1].ok);
  const auto csv = sweep_to_csv({bad, good}, rows);
  EXPECT_NE(csv.find("bad,cni,1,500,L"), std::string::npos);
}

TEST(Sweep, FiveShotBeatsOneShotOnMostSeeds) {
  const benchmark::Recipe recipe;
  int wins = 0;
  for (auto seed : benchmark::kSeeds) {
    const auto& d = bench(seed);
    std::vector<SweepVariant> vs;
    for (std::size_t k : {1u, 5u}) {
      SweepVariant v;
      v.name = "k" + std::to_string(k);
      v.init = {HeadInitMode::CategoryNames, std::nullopt, seed};
      v.config = benchmark::train_config(recipe, HeadInitMode::CategoryNames, ShotSpec::shots(k, seed), seed);
      vs.push_back(v);
    }
    const auto rows = sweep(vs, d.train, d.test, &d.bank);
    wins += rows[1].final_top1 >= rows[0].final_top1;
  }
  EXPECT_GE(wins, 3);
}
