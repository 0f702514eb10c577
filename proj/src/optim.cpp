#include "cni/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cni/errors.hpp"

namespace cni {

void ScheduleConfig::validate() const {
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw Error(ErrorCode::ConfigError, "base_lr must be > 0");
  if (!(min_lr >= 0.0) || !std::isfinite(min_lr)) throw Error(ErrorCode::ConfigError, "min_lr must be >= 0");
  if (total_steps < 1) throw Error(ErrorCode::ConfigError, "total_steps must be >= 1");
  if (warmup_steps >= total_steps)
    throw Error(ErrorCode::ConfigError, "warmup_steps (" + std::to_string(warmup_steps) +
                                            ") must be < total_steps (" + std::to_string(total_steps) + ")");
}

double cosine_lr(std::uint64_t step, const ScheduleConfig& cfg) {
  step = std::min(step, cfg.total_steps);
  if (step < cfg.warmup_steps)
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.min_lr + (cfg.base_lr - cfg.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdafactorOptions::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw Error(ErrorCode::ConfigError, "beta1 must lie in [0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw Error(ErrorCode::ConfigError, "beta2 must lie in (0, 1)");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::ConfigError, "weight_decay must be >= 0");
  if (!(eps1 >= 0.0) || !(eps2 >= 0.0)) throw Error(ErrorCode::ConfigError, "epsilons must be >= 0");
  if (!(clip_threshold > 0.0)) throw Error(ErrorCode::ConfigError, "clip_threshold must be > 0");
}

double adafactor_beta2(std::uint64_t step, double beta2) {
  const double t = static_cast<double>(std::max<std::uint64_t>(step, 1));
  return std::min(beta2, 1.0 - std::pow(t, -0.8));
}

void adafactor_update(AdafactorSlot& slot, std::span<double> param, std::span<const double> grad,
                      std::uint64_t step, double lr, const AdafactorOptions& opts) {
  const auto n = param.size();
  if (grad.size() != n || slot.rows * slot.cols != n)
    throw Error(ErrorCode::ShapeMismatch, "gradient size " + std::to_string(grad.size()) +
                                              " does not match parameter size " + std::to_string(n));
  if (slot.momentum.size() != n) {
    slot.momentum.assign(n, 0.0);
    slot.factored = slot.rows > 1 && slot.cols > 1;
    if (slot.factored) {
      slot.row_acc.assign(slot.rows, 0.0);
      slot.col_acc.assign(slot.cols, 0.0);
      slot.full_acc.clear();
    } else {
      slot.full_acc.assign(n, 0.0);
    }
  }
  if (n == 0) return;

  const double b2 = adafactor_beta2(step, opts.beta2);
  std::vector<double> update(n);

  if (slot.factored) {
    const auto R = slot.rows;
    const auto K = slot.cols;
    std::vector<double> row_mean(R, 0.0), col_mean(K, 0.0);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t k = 0; k < K; ++k) {
        const double g2 = grad[r * K + k] * grad[r * K + k] + opts.eps1;
        row_mean[r] += g2;
        col_mean[k] += g2;
      }
    for (std::size_t r = 0; r < R; ++r)
      slot.row_acc[r] = b2 * slot.row_acc[r] + (1.0 - b2) * row_mean[r] / static_cast<double>(K);
    for (std::size_t k = 0; k < K; ++k)
      slot.col_acc[k] = b2 * slot.col_acc[k] + (1.0 - b2) * col_mean[k] / static_cast<double>(R);
    double row_avg = 0.0;
    for (const double v : slot.row_acc) row_avg += v;
    row_avg /= static_cast<double>(R);
    // V_hat[r, k] = row_acc[r] * col_acc[k] / mean(row_acc)
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t k = 0; k < K; ++k) {
        const double v = slot.row_acc[r] * slot.col_acc[k] / row_avg;
        update[r * K + k] = v > 0.0 ? grad[r * K + k] / std::sqrt(v) : 0.0;
      }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      slot.full_acc[i] = b2 * slot.full_acc[i] + (1.0 - b2) * (grad[i] * grad[i] + opts.eps1);
      const double v = slot.full_acc[i];
      update[i] = v > 0.0 ? grad[i] / std::sqrt(v) : 0.0;
    }
  }

  double ss = 0.0;
  for (const double u : update) ss += u * u;
  const double rms = std::sqrt(ss / static_cast<double>(n));
  const double clip = std::max(1.0, rms / opts.clip_threshold);

  double step_size = lr;
  if (opts.scale_by_parameter_rms) {
    double ps = 0.0;
    for (const double p : param) ps += p * p;
    step_size *= std::max(opts.eps2, std::sqrt(ps / static_cast<double>(n)));
  }

  const double decay = opts.weight_decay * lr;
  for (std::size_t i = 0; i < n; ++i) {
    slot.momentum[i] = opts.beta1 * slot.momentum[i] + (1.0 - opts.beta1) * update[i] / clip;
    param[i] = param[i] - step_size * slot.momentum[i] - decay * param[i];
  }
}

void adafactor_step(AdafactorState& state, ModelParams& params, const GradientSet& grads, double lr,
                    const AdafactorOptions& opts) {
  opts.validate();
  for (const auto g : kAllParamGroups) {
    const auto& grad = grads[static_cast<std::size_t>(g)];
    if (!grad.empty() && grad.size() != params.group(g).size())
      throw Error(ErrorCode::ShapeMismatch, std::string("gradient for ") + to_string(g) + " has wrong size");
  }
  ++state.step;
  for (const auto g : kAllParamGroups) {
    const auto& grad = grads[static_cast<std::size_t>(g)];
    if (grad.empty()) continue;
    auto& slot = state.slots[static_cast<std::size_t>(g)];
    const auto shape = params.shape(g);
    slot.rows = shape.rows;
    slot.cols = shape.cols;
    adafactor_update(slot, params.group(g), grad, state.step, lr, opts);
  }
}

void sgd_step(ModelParams& params, const GradientSet& grads, double lr, double weight_decay) {
  for (const auto g : kAllParamGroups) {
    const auto& grad = grads[static_cast<std::size_t>(g)];
    if (grad.empty()) continue;
    auto p = params.group(g);
    if (grad.size() != p.size()) throw Error(ErrorCode::ShapeMismatch, "gradient size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = p[i] - lr * grad[i] - lr * weight_decay * p[i];
  }
}

}  // namespace cni
