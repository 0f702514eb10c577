#include "cni/headinit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "cni/errors.hpp"
#include "cni/rng.hpp"

namespace cni {

Tensor average_text_embeddings(const TextEmbeddingBank& bank) {
  bank.validate(1);
  const auto n_prompts = bank.prompts();
  const auto classes = bank.classes();
  const auto dim = bank.dim();
  std::vector<float> out(classes * dim);
  std::vector<double> mean(dim);
  for (std::size_t c = 0; c < classes; ++c) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t n = 0; n < n_prompts; ++n) {
      const float* row = bank.embeddings.data.data() + (n * classes + c) * dim;
      for (std::size_t d = 0; d < dim; ++d) mean[d] += row[d];
    }
    double ss = 0.0;
    for (double& x : mean) {
      x /= static_cast<double>(n_prompts);
      ss += x * x;
    }
    const double norm = std::sqrt(ss);
    if (!(norm > 0.0)) throw ZeroNormRow(c);
    for (std::size_t d = 0; d < dim; ++d) out[c * dim + d] = static_cast<float>(mean[d] / norm);
  }
  return Tensor({classes, dim}, std::move(out));
}

const char* to_string(HeadInitMode mode) {
  switch (mode) {
    case HeadInitMode::Random: return "random";
    case HeadInitMode::CategoryNames: return "cni";
    case HeadInitMode::Partial: return "partial";
  }
  return "unknown";
}

HeadInitMode parse_head_init_mode(const std::string& s) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "random") return HeadInitMode::Random;
  if (lower == "cni") return HeadInitMode::CategoryNames;
  if (lower == "partial") return HeadInitMode::Partial;
  throw Error(ErrorCode::ConfigError, "unknown head init mode '" + s + "' (expected random, cni or partial)");
}

void HeadInitSpec::validate() const {
  if (mode == HeadInitMode::Partial) {
    if (!fraction) throw Error(ErrorCode::ConfigError, "partial head init requires a fraction");
    if (!(*fraction >= 0.0 && *fraction <= 1.0))
      throw Error(ErrorCode::ConfigError, "partial fraction must lie in [0, 1]");
  }
}

std::size_t Head::text_rows() const {
  return static_cast<std::size_t>(std::count(provenance.begin(), provenance.end(), RowSource::Text));
}

Head init_head(const HeadInitSpec& spec, const Tensor* text_average, std::size_t classes, std::size_t dim) {
  spec.validate();
  if (classes < 1 || dim < 1) throw Error(ErrorCode::ShapeMismatch, "head needs C >= 1 and D >= 1");
  const bool needs_text = spec.mode != HeadInitMode::Random;
  if (needs_text) {
    if (text_average == nullptr)
      throw Error(ErrorCode::ShapeMismatch, std::string(to_string(spec.mode)) + " init needs text embeddings");
    if (text_average->shape != Shape{classes, dim})
      throw Error(ErrorCode::ShapeMismatch, "text embeddings " + shape_string(text_average->shape) +
                                                " do not match head (" + std::to_string(classes) + ", " +
                                                std::to_string(dim) + ")");
  }

  Head head;
  head.bias = Tensor::zeros({classes});

  if (spec.mode == HeadInitMode::CategoryNames) {
    head.weight = *text_average;
    head.provenance.assign(classes, RowSource::Text);
    return head;
  }

  std::vector<float> w(classes * dim);
  Rng rng(spec.seed, streams::kHeadInit);
  std::vector<double> row(dim);
  for (std::size_t c = 0; c < classes; ++c) {
    double ss = 0.0;
    while (ss == 0.0) {
      ss = 0.0;
      for (double& x : row) {
        x = rng.normal();
        ss += x * x;
      }
    }
    const double norm = std::sqrt(ss);
    for (std::size_t d = 0; d < dim; ++d) w[c * dim + d] = static_cast<float>(row[d] / norm);
  }
  head.weight = Tensor({classes, dim}, std::move(w));
  head.provenance.assign(classes, RowSource::Random);

  if (spec.mode == HeadInitMode::Partial) {
    const auto take = static_cast<std::size_t>(std::floor(*spec.fraction * static_cast<double>(classes) + 1e-9));
    std::vector<std::size_t> order(classes);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng pick(spec.seed, streams::kHeadRowSelection);
    pick.shuffle(std::span<std::size_t>(order));
    for (std::size_t i = 0; i < take; ++i) {
      const auto c = order[i];
      std::copy_n(text_average->data.begin() + static_cast<std::ptrdiff_t>(c * dim), dim,
                  head.weight.data.begin() + static_cast<std::ptrdiff_t>(c * dim));
      head.provenance[c] = RowSource::Text;
    }
  }
  return head;
}

}  // namespace cni
