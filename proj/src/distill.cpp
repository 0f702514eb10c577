#include "cni/distill.hpp"

#include "cni/errors.hpp"
#include "training_loop.hpp"

namespace cni {

std::vector<double> teacher_predict(const ModelParams& teacher, const Tensor& tokens, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::ConfigError, "temperature must be > 0");
  const auto cache = forward(teacher, tokens);
  if (temperature == 1.0) return cache.probs;
  std::vector<double> out;
  out.reserve(cache.probs.size());
  for (std::size_t e = 0; e < cache.batch; ++e) {
    const auto p = softmax(cache.logits_row(e), temperature);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

TrainResult distill_train(const ModelParams& teacher, const ModelParams& student0, const EmbeddingDataset& labeled,
                          const EmbeddingDataset& unlabeled, const EmbeddingDataset& test_ds,
                          const DistillConfig& cfg) {
  teacher.validate();
  student0.validate();
  if (teacher.classes != student0.classes || teacher.dim != student0.dim)
    throw Error(ErrorCode::ShapeMismatch, "teacher and student must share C and D");

  TrainConfig student_cfg = cfg.student;
  student_cfg.policy = FreezePolicy::All;
  student_cfg.loss.validate();

  if (student_cfg.loss.distill_weight == 0.0)
    return detail::run_training(student0, labeled, test_ds, student_cfg, nullptr);

  if (unlabeled.size() == 0)
    throw Error(ErrorCode::ConfigError, "distillation weight > 0 needs a non-empty unlabeled pool");
  if (unlabeled.tokens.ndim() != 3 || unlabeled.dim() != teacher.dim)
    throw Error(ErrorCode::ShapeMismatch, "unlabeled pool does not match the model dim");
  if (!all_finite(unlabeled.tokens.data)) throw Error(ErrorCode::NonFiniteValue, "unlabeled pool has non-finite tokens");

  detail::UnlabeledPool pool;
  pool.data = &unlabeled;
  pool.teacher_probs = teacher_predict(teacher, unlabeled.tokens, student_cfg.loss.distill_temperature);
  pool.batch_size = cfg.unlabeled_batch_size ? cfg.unlabeled_batch_size : student_cfg.batch_size;
  return detail::run_training(student0, labeled, test_ds, student_cfg, &pool);
}

}  // namespace cni
