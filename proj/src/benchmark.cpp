#include "cni/benchmark.hpp"

namespace cni::benchmark {

SyntheticSpec reference_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.classes = 10;
  s.dim = 32;
  s.tokens = 4;
  s.train_per_class = 50;
  s.test_per_class = 50;
  s.prompts = 8;
  s.img_noise = 0.35;
  s.txt_noise = 0.15;
  s.seed = seed;
  return s;
}

double Recipe::lr_for(HeadInitMode mode) const {
  switch (mode) {
    case HeadInitMode::CategoryNames: return lr_category_names;
    case HeadInitMode::Random: return lr_random;
    case HeadInitMode::Partial: return lr_partial;
  }
  return lr_category_names;
}

TrainConfig train_config(const Recipe& recipe, HeadInitMode mode, const ShotSpec& shots, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.shots = shots;
  cfg.epochs = recipe.epochs;
  cfg.batch_size = recipe.batch_size;
  cfg.eval_every = recipe.eval_every;
  cfg.schedule.base_lr = recipe.lr_for(mode);
  cfg.loss.label_smoothing = recipe.label_smoothing;
  cfg.loss.distill_temperature = recipe.distill_temperature;
  cfg.policy = recipe.policy;
  cfg.seed = seed;
  return cfg;
}

TrainConfig teacher_config(const Recipe& recipe, std::uint64_t seed) {
  return train_config(recipe, HeadInitMode::CategoryNames, ShotSpec::portion(1.0, seed), seed);
}

DistillConfig student_config(const Recipe& recipe, std::uint64_t seed, double distill_weight) {
  DistillConfig cfg;
  cfg.student = train_config(recipe, HeadInitMode::CategoryNames, ShotSpec::shots(1, seed), seed);
  cfg.student.policy = FreezePolicy::All;
  cfg.student.loss.distill_weight = distill_weight;
  return cfg;
}

ModelParams initial_params(const TextEmbeddingBank& bank, HeadInitMode mode, std::uint64_t seed,
                           double partial_fraction) {
  const auto text = average_text_embeddings(bank);
  HeadInitSpec spec;
  spec.mode = mode;
  spec.seed = seed;
  if (mode == HeadInitMode::Partial) spec.fraction = partial_fraction;
  return ModelParams::from_head(init_head(spec, &text, bank.classes(), bank.dim()));
}

}  // namespace cni::benchmark
