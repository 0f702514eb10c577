#include "cni/eval.hpp"

#include <cmath>

#include <json.hpp>

#include "cni/errors.hpp"
#include "cni/headinit.hpp"

namespace cni {

namespace {
// Forward in chunks to bound the cache size on large evaluation sets.
constexpr std::size_t kEvalChunk = 256;
}  // namespace

EvalReport EvalReport::from_predictions(std::vector<int> predictions, const std::vector<int>& labels,
                                        std::size_t classes) {
  if (predictions.size() != labels.size())
    throw Error(ErrorCode::ShapeMismatch, "prediction and label counts differ");
  EvalReport r;
  r.classes = classes;
  r.confusion.assign(classes, std::vector<std::uint64_t>(classes, 0));
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto t = static_cast<std::size_t>(labels[i]);
    const auto p = static_cast<std::size_t>(predictions[i]);
    if (t >= classes || p >= classes) throw Error(ErrorCode::LabelOutOfRange, "label outside [0, C)");
    ++r.confusion[t][p];
    if (t == p) ++correct;
  }
  r.top1 = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  r.per_class.assign(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    std::uint64_t total = 0;
    for (const auto v : r.confusion[c]) total += v;
    if (total) r.per_class[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(total);
  }
  r.predictions = std::move(predictions);
  return r;
}

EvalReport top1(const ModelParams& params, const EmbeddingDataset& ds) {
  if (ds.classes != params.classes)
    throw Error(ErrorCode::ShapeMismatch, "dataset has " + std::to_string(ds.classes) + " classes, model " +
                                              std::to_string(params.classes));
  std::vector<int> preds;
  preds.reserve(ds.size());
  for (std::size_t start = 0; start < ds.size(); start += kEvalChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + kEvalChunk); ++i) idx.push_back(i);
    const auto cache = forward(params, gather_tokens(ds, idx));
    for (std::size_t e = 0; e < cache.batch; ++e) preds.push_back(static_cast<int>(argmax(cache.logits_row(e))));
  }
  return EvalReport::from_predictions(std::move(preds), ds.labels, ds.classes);
}

EvalReport zero_shot(const TextEmbeddingBank& bank, const EmbeddingDataset& ds) {
  const auto text = average_text_embeddings(bank);
  const auto C = bank.classes();
  const auto D = bank.dim();
  if (C != ds.classes || D != ds.dim())
    throw Error(ErrorCode::ShapeMismatch, "bank (C=" + std::to_string(C) + ", D=" + std::to_string(D) +
                                              ") does not match dataset (C=" + std::to_string(ds.classes) +
                                              ", D=" + std::to_string(ds.dim()) + ")");
  const auto T = ds.tokens_per_example();

  std::vector<double> text_norm(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double ss = 0.0;
    for (std::size_t d = 0; d < D; ++d) ss += static_cast<double>(text.data[c * D + d]) * text.data[c * D + d];
    text_norm[c] = std::sqrt(ss);
  }

  std::vector<int> preds;
  preds.reserve(ds.size());
  std::vector<double> mean(D), cosine(C);
  for (std::size_t e = 0; e < ds.size(); ++e) {
    std::fill(mean.begin(), mean.end(), 0.0);
    const float* tok = ds.tokens.data.data() + e * T * D;
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t d = 0; d < D; ++d) mean[d] += tok[i * D + d];
    double ss = 0.0;
    for (double& x : mean) {
      x /= static_cast<double>(T);
      ss += x * x;
    }
    const double norm = std::sqrt(ss);
    if (!(norm > 0.0)) throw Error(ErrorCode::ZeroNormPooled, "mean token of example " + std::to_string(e) + " is zero");
    for (std::size_t c = 0; c < C; ++c) {
      double dot = 0.0;
      for (std::size_t d = 0; d < D; ++d) dot += static_cast<double>(text.data[c * D + d]) * mean[d];
      cosine[c] = dot / (norm * text_norm[c]);
    }
    preds.push_back(static_cast<int>(argmax(cosine)));
  }
  return EvalReport::from_predictions(std::move(preds), ds.labels, C);
}

std::string to_json(const EvalReport& report, int indent) {
  nlohmann::json j;
  j["classes"] = report.classes;
  j["top1"] = report.top1;
  j["per_class"] = report.per_class;
  j["confusion"] = report.confusion;
  return j.dump(indent);
}

}  // namespace cni
