#include "cni/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>

#include "cni/errors.hpp"

namespace cni {

namespace {

constexpr double kMinPooledNorm = 1e-12;
constexpr double kTeacherSumTolerance = 1e-6;

void check_tokens(const ModelParams& p, const Tensor& tokens) {
  if (tokens.ndim() != 3 || tokens.dim(2) != p.dim || tokens.dim(1) < 1)
    throw Error(ErrorCode::ShapeMismatch, "tokens " + shape_string(tokens.shape) + " do not match model dim " +
                                              std::to_string(p.dim));
}

void check_labels(std::span<const int> labels, std::size_t batch, std::size_t classes) {
  if (labels.size() != batch)
    throw Error(ErrorCode::ShapeMismatch,
                std::to_string(labels.size()) + " labels for a batch of " + std::to_string(batch));
  for (const int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= classes)
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(l));
}

std::vector<double> log_softmax(std::span<const double> z, double temperature) {
  double mx = -INFINITY;
  for (const double v : z) mx = std::max(mx, v / temperature);
  double sum = 0.0;
  for (const double v : z) sum += std::exp(v / temperature - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] / temperature - lse;
  return out;
}

void check_teacher(std::span<const double> probs, std::size_t batch, std::size_t classes) {
  if (probs.size() != batch * classes)
    throw Error(ErrorCode::BadTeacherDistribution, "teacher probabilities have " + std::to_string(probs.size()) +
                                                       " entries, expected " + std::to_string(batch * classes));
  for (std::size_t e = 0; e < batch; ++e) {
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double v = probs[e * classes + c];
      if (!std::isfinite(v) || v < 0.0)
        throw Error(ErrorCode::BadTeacherDistribution, "teacher row " + std::to_string(e) + " has invalid entry");
      s += v;
    }
    if (std::abs(s - 1.0) > kTeacherSumTolerance)
      throw Error(ErrorCode::BadTeacherDistribution,
                  "teacher row " + std::to_string(e) + " sums to " + std::to_string(s));
  }
}

double kl_mean(const ForwardCache& student, std::span<const double> teacher, double temperature) {
  const auto classes = student.classes;
  double total = 0.0;
  for (std::size_t e = 0; e < student.batch; ++e) {
    const auto log_q = log_softmax(student.logits_row(e), temperature);
    double kl = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = teacher[e * classes + c];
      if (p > 0.0) kl += p * (std::log(p) - log_q[c]);
    }
    total += kl;
  }
  return student.batch ? total / static_cast<double>(student.batch) : 0.0;
}

double anchor_distance(const ModelParams& params, const ModelParams& anchor, FreezePolicy policy) {
  double ss = 0.0;
  for (const auto g : kAllParamGroups) {
    if (!is_trainable(policy, g)) continue;
    const auto cur = params.group(g);
    const auto ref = anchor.group(g);
    if (cur.size() != ref.size()) throw Error(ErrorCode::ShapeMismatch, "anchor shape differs from params");
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double d = cur[i] - ref[i];
      ss += d * d;
    }
  }
  return ss;
}

// Adds the gradient contribution of one example whose logit gradient is `dz`.
void backprop_example(const ModelParams& p, const ForwardCache& cache, const Tensor& tokens, std::size_t e,
                      std::span<const double> dz, FreezePolicy policy, GradientSet& grads,
                      std::vector<double>& scratch_dh, std::vector<double>& scratch_dalpha) {
  const auto C = p.classes;
  const auto D = p.dim;
  const auto T = cache.tokens;
  const double* hhat = cache.normalized.data() + e * D;

  auto& gW = grads[static_cast<std::size_t>(ParamGroup::HeadWeight)];
  auto& gb = grads[static_cast<std::size_t>(ParamGroup::HeadBias)];
  for (std::size_t c = 0; c < C; ++c) {
    const double g = p.logit_scale * dz[c];
    for (std::size_t d = 0; d < D; ++d) gW[c * D + d] += g * hhat[d];
    gb[c] += dz[c];
  }
  if (policy == FreezePolicy::Linear) return;

  // d loss / d Hhat, then through the normalization.
  auto& dh = scratch_dh;
  dh.assign(D, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double g = p.logit_scale * dz[c];
    for (std::size_t d = 0; d < D; ++d) dh[d] += g * p.head_weight[c * D + d];
  }
  double proj = 0.0;
  for (std::size_t d = 0; d < D; ++d) proj += hhat[d] * dh[d];
  const double inv_norm = 1.0 / cache.pooled_norm[e];
  for (std::size_t d = 0; d < D; ++d) dh[d] = (dh[d] - hhat[d] * proj) * inv_norm;

  // Through H = sum alpha_i t'_i and the attention softmax.
  const double* adapted = cache.adapted.data() + e * T * D;
  const double* alpha = cache.attention.data() + e * T;
  auto& dalpha = scratch_dalpha;
  dalpha.assign(T, 0.0);
  double mean_dalpha = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < D; ++d) s += adapted[i * D + d] * dh[d];
    dalpha[i] = s;
    mean_dalpha += alpha[i] * s;
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));
  auto& gq = grads[static_cast<std::size_t>(ParamGroup::PoolQuery)];
  for (std::size_t i = 0; i < T; ++i) {
    const double ds = alpha[i] * (dalpha[i] - mean_dalpha) * inv_sqrt_d;
    dalpha[i] = ds;  // reused as d score (already divided by sqrt(D))
    for (std::size_t d = 0; d < D; ++d) gq[d] += ds * adapted[i * D + d];
  }
  if (policy != FreezePolicy::All) return;

  auto& gA = grads[static_cast<std::size_t>(ParamGroup::AdapterWeight)];
  auto& ga = grads[static_cast<std::size_t>(ParamGroup::AdapterBias)];
  const float* raw = tokens.data.data() + e * T * D;
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t r = 0; r < D; ++r) {
      const double dt = alpha[i] * dh[r] + dalpha[i] * p.pool_query[r];
      ga[r] += dt;
      double* row = gA.data() + r * D;
      for (std::size_t k = 0; k < D; ++k) row[k] += dt * static_cast<double>(raw[i * D + k]);
    }
  }
}

}  // namespace

const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::AdapterWeight: return "adapter_weight";
    case ParamGroup::AdapterBias: return "adapter_bias";
    case ParamGroup::PoolQuery: return "pool_query";
    case ParamGroup::HeadWeight: return "head_weight";
    case ParamGroup::HeadBias: return "head_bias";
  }
  return "unknown";
}

const char* to_string(FreezePolicy p) {
  switch (p) {
    case FreezePolicy::Linear: return "L";
    case FreezePolicy::PoolerLinear: return "PL";
    case FreezePolicy::All: return "ALL";
  }
  return "unknown";
}

FreezePolicy parse_freeze_policy(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char ch) { return std::toupper(ch); });
  if (u == "L") return FreezePolicy::Linear;
  if (u == "PL" || u == "P+L") return FreezePolicy::PoolerLinear;
  if (u == "ALL") return FreezePolicy::All;
  throw Error(ErrorCode::ConfigError, "unknown freeze policy '" + s + "' (expected L, PL or ALL)");
}

bool is_trainable(FreezePolicy policy, ParamGroup group) {
  switch (group) {
    case ParamGroup::HeadWeight:
    case ParamGroup::HeadBias:
      return true;
    case ParamGroup::PoolQuery:
      return policy != FreezePolicy::Linear;
    case ParamGroup::AdapterWeight:
    case ParamGroup::AdapterBias:
      return policy == FreezePolicy::All;
  }
  return false;
}

ModelParams ModelParams::from_head(const Head& head, double logit_scale) {
  if (head.weight.ndim() != 2 || head.bias.shape != Shape{head.weight.shape.at(0)})
    throw Error(ErrorCode::ShapeMismatch, "head weight must be (C, D) with bias (C)");
  ModelParams p;
  p.classes = head.weight.dim(0);
  p.dim = head.weight.dim(1);
  p.adapter_weight.assign(p.dim * p.dim, 0.0);
  for (std::size_t i = 0; i < p.dim; ++i) p.adapter_weight[i * p.dim + i] = 1.0;
  p.adapter_bias.assign(p.dim, 0.0);
  p.pool_query.assign(p.dim, 0.0);
  p.head_weight.assign(head.weight.data.begin(), head.weight.data.end());
  p.head_bias.assign(head.bias.data.begin(), head.bias.data.end());
  p.logit_scale = logit_scale;
  p.validate();
  return p;
}

std::span<double> ModelParams::group(ParamGroup g) {
  switch (g) {
    case ParamGroup::AdapterWeight: return adapter_weight;
    case ParamGroup::AdapterBias: return adapter_bias;
    case ParamGroup::PoolQuery: return pool_query;
    case ParamGroup::HeadWeight: return head_weight;
    case ParamGroup::HeadBias: return head_bias;
  }
  return {};
}

std::span<const double> ModelParams::group(ParamGroup g) const {
  return const_cast<ModelParams*>(this)->group(g);
}

GroupShape ModelParams::shape(ParamGroup g) const {
  switch (g) {
    case ParamGroup::AdapterWeight: return {dim, dim};
    case ParamGroup::AdapterBias: return {dim, 1};
    case ParamGroup::PoolQuery: return {dim, 1};
    case ParamGroup::HeadWeight: return {classes, dim};
    case ParamGroup::HeadBias: return {classes, 1};
  }
  return {0, 0};
}

void ModelParams::validate() const {
  if (classes < 1 || dim < 1) throw Error(ErrorCode::ShapeMismatch, "model needs C >= 1 and D >= 1");
  for (const auto g : kAllParamGroups)
    if (group(g).size() != shape(g).size())
      throw Error(ErrorCode::ShapeMismatch, std::string(to_string(g)) + " has " + std::to_string(group(g).size()) +
                                                " values, expected " + std::to_string(shape(g).size()));
  if (!(logit_scale > 0.0) || !std::isfinite(logit_scale))
    throw Error(ErrorCode::ConfigError, "logit_scale must be positive and finite");
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

bool bit_equal(const ModelParams& a, const ModelParams& b) {
  if (a.classes != b.classes || a.dim != b.dim) return false;
  if (std::memcmp(&a.logit_scale, &b.logit_scale, sizeof(double)) != 0) return false;
  for (const auto g : kAllParamGroups)
    if (!bit_equal(a.group(g), b.group(g))) return false;
  return true;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  auto out = log_softmax(logits, temperature);
  for (double& v : out) v = std::exp(v);
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

ForwardCache forward(const ModelParams& p, const Tensor& tokens) {
  check_tokens(p, tokens);
  const auto B = tokens.dim(0);
  const auto T = tokens.dim(1);
  const auto D = p.dim;
  const auto C = p.classes;

  ForwardCache cache;
  cache.batch = B;
  cache.tokens = T;
  cache.dim = D;
  cache.classes = C;
  cache.adapted.resize(B * T * D);
  cache.attention.resize(B * T);
  cache.pooled.assign(B * D, 0.0);
  cache.pooled_norm.resize(B);
  cache.normalized.resize(B * D);
  cache.logits.resize(B * C);
  cache.probs.resize(B * C);

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));
  std::vector<double> scores(T);
  for (std::size_t e = 0; e < B; ++e) {
    const float* raw = tokens.data.data() + e * T * D;
    double* adapted = cache.adapted.data() + e * T * D;
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t r = 0; r < D; ++r) {
        double s = p.adapter_bias[r];
        const double* row = p.adapter_weight.data() + r * D;
        for (std::size_t k = 0; k < D; ++k) s += row[k] * static_cast<double>(raw[i * D + k]);
        adapted[i * D + r] = s;
      }
      double dot = 0.0;
      for (std::size_t d = 0; d < D; ++d) dot += adapted[i * D + d] * p.pool_query[d];
      scores[i] = dot * inv_sqrt_d;
    }
    const auto alpha = softmax(scores);
    std::copy(alpha.begin(), alpha.end(), cache.attention.begin() + static_cast<std::ptrdiff_t>(e * T));

    double* h = cache.pooled.data() + e * D;
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t d = 0; d < D; ++d) h[d] += alpha[i] * adapted[i * D + d];
    double ss = 0.0;
    for (std::size_t d = 0; d < D; ++d) ss += h[d] * h[d];
    const double norm = std::sqrt(ss);
    if (!(norm >= kMinPooledNorm))
      throw Error(ErrorCode::ZeroNormPooled, "pooled embedding of example " + std::to_string(e) + " has norm " +
                                                 std::to_string(norm));
    cache.pooled_norm[e] = norm;
    double* hhat = cache.normalized.data() + e * D;
    for (std::size_t d = 0; d < D; ++d) hhat[d] = h[d] / norm;

    double* z = cache.logits.data() + e * C;
    for (std::size_t c = 0; c < C; ++c) {
      double dot = 0.0;
      for (std::size_t d = 0; d < D; ++d) dot += p.head_weight[c * D + d] * hhat[d];
      z[c] = p.logit_scale * dot + p.head_bias[c];
    }
    const auto y = softmax(std::span<const double>(z, C));
    std::copy(y.begin(), y.end(), cache.probs.begin() + static_cast<std::ptrdiff_t>(e * C));
  }
  return cache;
}

void LossConfig::validate() const {
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw Error(ErrorCode::ConfigError, "label_smoothing must lie in [0, 1)");
  if (!(anchor_lambda >= 0.0) || !std::isfinite(anchor_lambda))
    throw Error(ErrorCode::ConfigError, "anchor_lambda must be >= 0");
  if (!(distill_weight >= 0.0) || !std::isfinite(distill_weight))
    throw Error(ErrorCode::ConfigError, "distill_weight must be >= 0");
  if (!(distill_temperature > 0.0) || !std::isfinite(distill_temperature))
    throw Error(ErrorCode::ConfigError, "distill_temperature must be > 0");
}

LossTerms loss_total(const ForwardCache& labeled, std::span<const int> labels, const ModelParams& params,
                     const ModelParams& anchor, const LossConfig& cfg, FreezePolicy policy,
                     const DistillTarget* distill) {
  cfg.validate();
  const auto C = labeled.classes;
  check_labels(labels, labeled.batch, C);

  LossTerms terms;
  const double off = cfg.label_smoothing / static_cast<double>(C);
  const double on = 1.0 - cfg.label_smoothing + off;
  double ce = 0.0;
  for (std::size_t e = 0; e < labeled.batch; ++e) {
    const auto log_y = log_softmax(labeled.logits_row(e), 1.0);
    double row = 0.0;
    for (std::size_t c = 0; c < C; ++c)
      row -= (static_cast<std::size_t>(labels[e]) == c ? on : off) * log_y[c];
    ce += row;
  }
  terms.ce = labeled.batch ? ce / static_cast<double>(labeled.batch) : 0.0;

  if (cfg.anchor_lambda > 0.0) terms.anchor = cfg.anchor_lambda * anchor_distance(params, anchor, policy);

  if (distill != nullptr && distill->student != nullptr) {
    check_teacher(distill->teacher_probs, distill->student->batch, distill->student->classes);
    terms.distill = cfg.distill_weight * kl_mean(*distill->student, distill->teacher_probs, cfg.distill_temperature);
  }
  return terms;
}

BackwardResult backward(const ModelParams& params, const Tensor& tokens, std::span<const int> labels,
                        const ModelParams& anchor, const LossConfig& cfg, FreezePolicy policy,
                        const DistillBatch* distill) {
  cfg.validate();
  params.validate();
  const auto C = params.classes;

  const auto cache = forward(params, tokens);
  ForwardCache unlabeled_cache;
  DistillTarget target;
  const bool use_distill = distill != nullptr && distill->tokens != nullptr;
  if (use_distill) {
    unlabeled_cache = forward(params, *distill->tokens);
    target = {&unlabeled_cache, distill->teacher_probs};
  }

  BackwardResult out;
  out.loss = loss_total(cache, labels, params, anchor, cfg, policy, use_distill ? &target : nullptr);
  if (!std::isfinite(out.loss.total())) throw Error(ErrorCode::NonFiniteLoss, "loss is not finite");

  for (const auto g : kAllParamGroups)
    if (is_trainable(policy, g)) out.grads[static_cast<std::size_t>(g)].assign(params.group(g).size(), 0.0);

  std::vector<double> dz(C), dh, dalpha;
  const double off = cfg.label_smoothing / static_cast<double>(C);
  const double on = 1.0 - cfg.label_smoothing + off;
  const double inv_b = 1.0 / static_cast<double>(cache.batch);
  for (std::size_t e = 0; e < cache.batch; ++e) {
    const auto y = cache.probs_row(e);
    for (std::size_t c = 0; c < C; ++c)
      dz[c] = (y[c] - (static_cast<std::size_t>(labels[e]) == c ? on : off)) * inv_b;
    backprop_example(params, cache, tokens, e, dz, policy, out.grads, dh, dalpha);
  }

  if (use_distill && cfg.distill_weight > 0.0 && unlabeled_cache.batch > 0) {
    const double tau = cfg.distill_temperature;
    const double scale = cfg.distill_weight / (tau * static_cast<double>(unlabeled_cache.batch));
    for (std::size_t e = 0; e < unlabeled_cache.batch; ++e) {
      const auto q = softmax(unlabeled_cache.logits_row(e), tau);
      for (std::size_t c = 0; c < C; ++c) dz[c] = scale * (q[c] - distill->teacher_probs[e * C + c]);
      backprop_example(params, unlabeled_cache, *distill->tokens, e, dz, policy, out.grads, dh, dalpha);
    }
  }

  if (cfg.anchor_lambda > 0.0) {
    for (const auto g : kAllParamGroups) {
      if (!is_trainable(policy, g)) continue;
      auto& grad = out.grads[static_cast<std::size_t>(g)];
      const auto cur = params.group(g);
      const auto ref = anchor.group(g);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += 2.0 * cfg.anchor_lambda * (cur[i] - ref[i]);
    }
  }
  return out;
}

}  // namespace cni
