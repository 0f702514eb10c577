#pragma once

// Trainable adaptation pipeline over frozen token embeddings:
//
//   t'_i   = A t_i + a                      adapter (stands in for the encoder layers)
//   alpha  = softmax(<t'_i, q> / sqrt(D))   single-query attention pooler
//   H      = sum_i alpha_i t'_i
//   logits = s * W (H / |H|) + b            linear head on the normalized pooled embedding
//   Y      = softmax(logits)
//
// The logit scale s is fixed. With A = I, a = 0, q = 0 and W set from the
// averaged text embeddings, argmax(logits) is exactly zero-shot cosine classification.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cni/headinit.hpp"
#include "cni/tensor.hpp"

namespace cni {

inline constexpr double kDefaultLogitScale = 10.0;

enum class ParamGroup : std::size_t { AdapterWeight = 0, AdapterBias, PoolQuery, HeadWeight, HeadBias };
inline constexpr std::size_t kParamGroups = 5;
inline constexpr std::array<ParamGroup, kParamGroups> kAllParamGroups = {
    ParamGroup::AdapterWeight, ParamGroup::AdapterBias, ParamGroup::PoolQuery, ParamGroup::HeadWeight,
    ParamGroup::HeadBias};

const char* to_string(ParamGroup g);

/// Which parameter groups receive gradients: head only (L), pooler + head (PL), or everything (All).
enum class FreezePolicy { Linear, PoolerLinear, All };

const char* to_string(FreezePolicy p);
/// Accepts "L", "PL", "P+L", "ALL" (case-insensitive).
FreezePolicy parse_freeze_policy(const std::string& s);
bool is_trainable(FreezePolicy policy, ParamGroup group);

struct GroupShape {
  std::size_t rows;
  std::size_t cols;
  std::size_t size() const { return rows * cols; }
  bool is_matrix() const { return rows > 1 && cols > 1; }
};

struct ModelParams {
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<double> adapter_weight;  // (D, D)
  std::vector<double> adapter_bias;    // D
  std::vector<double> pool_query;      // D
  std::vector<double> head_weight;     // (C, D)
  std::vector<double> head_bias;       // C
  double logit_scale = kDefaultLogitScale;

  /// Identity adapter, zero pooler query, head copied from `head`.
  static ModelParams from_head(const Head& head, double logit_scale = kDefaultLogitScale);

  std::span<double> group(ParamGroup g);
  std::span<const double> group(ParamGroup g) const;
  GroupShape shape(ParamGroup g) const;

  /// Throws ShapeMismatch / ConfigError.
  void validate() const;
};

/// Bitwise comparison of one parameter group.
bool bit_equal(std::span<const double> a, std::span<const double> b);
bool bit_equal(const ModelParams& a, const ModelParams& b);

/// Per-group gradients; an empty vector marks a frozen group.
using GradientSet = std::array<std::vector<double>, kParamGroups>;

struct ForwardCache {
  std::size_t batch = 0;
  std::size_t tokens = 0;
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<double> adapted;      // (B, T, D)
  std::vector<double> attention;    // (B, T)
  std::vector<double> pooled;       // (B, D), H
  std::vector<double> pooled_norm;  // B, |H|
  std::vector<double> normalized;   // (B, D), H / |H|
  std::vector<double> logits;       // (B, C)
  std::vector<double> probs;        // (B, C)

  std::span<const double> logits_row(std::size_t e) const { return {logits.data() + e * classes, classes}; }
  std::span<const double> probs_row(std::size_t e) const { return {probs.data() + e * classes, classes}; }
};

/// tokens: (B, T, D). Throws ShapeMismatch, or ZeroNormPooled when |H| < 1e-12.
ForwardCache forward(const ModelParams& params, const Tensor& tokens);

struct LossConfig {
  double label_smoothing = 0.1;
  double anchor_lambda = 0.0;
  double distill_weight = 0.0;
  double distill_temperature = 1.0;

  void validate() const;
};

/// Weighted loss contributions: ce, anchor_lambda * |theta - theta0|^2 and
/// distill_weight * KL(teacher || student).
struct LossTerms {
  double ce = 0.0;
  double anchor = 0.0;
  double distill = 0.0;
  double total() const { return ce + anchor + distill; }
};

/// softmax(logits / temperature), computed with max subtraction.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

/// Student cache over an unlabeled batch with the teacher's probability rows
/// (B_u, C), already at the distillation temperature.
struct DistillTarget {
  const ForwardCache* student = nullptr;
  std::span<const double> teacher_probs;
};

/// Label-smoothed cross entropy (target (1 - eps) onehot + eps / C, averaged over
/// the batch) + anchored L2 over the policy's trainable groups + KL distillation
/// averaged over the unlabeled batch. Throws BadTeacherDistribution for teacher
/// rows that are not probability vectors (sum within 1e-6 of 1).
LossTerms loss_total(const ForwardCache& labeled, std::span<const int> labels, const ModelParams& params,
                     const ModelParams& anchor, const LossConfig& cfg, FreezePolicy policy,
                     const DistillTarget* distill = nullptr);

struct DistillBatch {
  const Tensor* tokens = nullptr;  // (B_u, T, D)
  std::span<const double> teacher_probs;
};

struct BackwardResult {
  LossTerms loss;
  GradientSet grads;
};

/// Closed-form gradients of loss_total for the groups `policy` unlocks.
/// Examples are reduced in ascending index order.
BackwardResult backward(const ModelParams& params, const Tensor& tokens, std::span<const int> labels,
                        const ModelParams& anchor, const LossConfig& cfg, FreezePolicy policy,
                        const DistillBatch* distill = nullptr);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace cni
