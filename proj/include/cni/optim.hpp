#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cni/model.hpp"

namespace cni {

struct ScheduleConfig {
  double base_lr = 1e-5;
  std::uint64_t total_steps = 1;
  std::uint64_t warmup_steps = 0;
  double min_lr = 0.0;

  void validate() const;
};

/// Linear warmup 0 -> base_lr over warmup_steps, then cosine decay to min_lr at total_steps.
/// Steps outside [0, total_steps] are clamped.
double cosine_lr(std::uint64_t step, const ScheduleConfig& cfg);

struct AdafactorOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;  // caps the decay schedule 1 - t^-0.8
  double weight_decay = 0.01;
  double eps1 = 1e-30;   // added to squared gradients
  double eps2 = 1e-3;    // floor on parameter RMS when scale_by_parameter_rms is set
  double clip_threshold = 1.0;
  bool scale_by_parameter_rms = false;

  void validate() const;
};

/// Second-moment statistics for one tensor. Matrices keep factored row and
/// column accumulators (rows + cols values); vectors keep a full accumulator.
struct AdafactorSlot {
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool factored = false;
  std::vector<double> row_acc;   // factored: mean over columns of g^2, per row
  std::vector<double> col_acc;   // factored: mean over rows of g^2, per column
  std::vector<double> full_acc;  // unfactored
  std::vector<double> momentum;

  std::size_t second_moment_size() const { return row_acc.size() + col_acc.size() + full_acc.size(); }
};

/// beta2_hat(t) = min(beta2, 1 - t^-0.8), t >= 1.
double adafactor_beta2(std::uint64_t step, double beta2);

/// One Adafactor update of a single tensor with the given (already incremented) step.
/// Relative step sizing is disabled: `lr` is the absolute step size.
void adafactor_update(AdafactorSlot& slot, std::span<double> param, std::span<const double> grad,
                      std::uint64_t step, double lr, const AdafactorOptions& opts);

struct AdafactorState {
  std::uint64_t step = 0;
  std::array<AdafactorSlot, kParamGroups> slots;
};

/// Applies one step to every group with a non-empty gradient and increments the step counter.
/// Throws ShapeMismatch when a gradient does not match its group.
void adafactor_step(AdafactorState& state, ModelParams& params, const GradientSet& grads, double lr,
                    const AdafactorOptions& opts = {});

/// Plain SGD with the same decoupled weight decay; kept for tests and comparisons.
void sgd_step(ModelParams& params, const GradientSet& grads, double lr, double weight_decay = 0.0);

}  // namespace cni
