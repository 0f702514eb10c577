#include "cni/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cni/errors.hpp"
#include "cni/rng.hpp"
#include "cni/tensorio.hpp"

#include <json.hpp>

namespace cni {

namespace {

std::uint64_t class_stream(std::uint64_t base, std::size_t c) {
  return base + (static_cast<std::uint64_t>(c + 1) << 32);
}

void normalize(std::vector<double>& v) {
  double ss = 0.0;
  for (const double x : v) ss += x * x;
  const double n = std::sqrt(ss);
  if (n > 0.0)
    for (double& x : v) x /= n;
}

void noisy_unit(const std::vector<double>& proto, double sigma, Rng& rng, std::vector<double>& out) {
  out.resize(proto.size());
  for (std::size_t i = 0; i < proto.size(); ++i) out[i] = proto[i] + sigma * rng.normal();
  normalize(out);
}

EmbeddingDataset make_split(const SyntheticSpec& spec, const std::vector<std::vector<double>>& protos,
                            std::size_t per_class, std::uint64_t stream) {
  EmbeddingDataset ds;
  ds.classes = spec.classes;
  std::vector<float> data;
  data.reserve(spec.classes * per_class * spec.tokens * spec.dim);
  std::vector<double> tok;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Rng rng(spec.seed, class_stream(stream, c));
    for (std::size_t e = 0; e < per_class; ++e) {
      for (std::size_t t = 0; t < spec.tokens; ++t) {
        noisy_unit(protos[c], spec.img_noise, rng, tok);
        for (const double x : tok) data.push_back(static_cast<float>(x));
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  ds.tokens = Tensor({spec.classes * per_class, spec.tokens, spec.dim}, std::move(data));
  return ds;
}

std::vector<std::string> prompt_templates(std::size_t n) {
  static const char* kBase[] = {
      "a photo of a {}.",         "a bad photo of a {}.",       "a photo of many {}.",
      "a sculpture of a {}.",     "a rendering of a {}.",       "graffiti of a {}.",
      "a cropped photo of a {}.", "a close-up photo of a {}.",  "a bright photo of a {}.",
      "a blurry photo of a {}.",  "a drawing of a {}.",         "a photo of the small {}.",
  };
  constexpr std::size_t kCount = sizeof(kBase) / sizeof(kBase[0]);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string t = kBase[i % kCount];
    if (i >= kCount) t += " (" + std::to_string(i / kCount) + ")";
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

void ShotSpec::validate() const {
  if (k.has_value() == fraction.has_value())
    throw Error(ErrorCode::ConfigError, "exactly one of shots-per-class or fraction must be set");
  if (k && *k < 1) throw Error(ErrorCode::ConfigError, "shots per class must be >= 1");
  if (fraction && !(*fraction > 0.0 && *fraction <= 1.0))
    throw Error(ErrorCode::ConfigError, "fraction must lie in (0, 1]");
}

std::vector<std::size_t> sample_k_shot(const EmbeddingDataset& ds, const ShotSpec& spec) {
  spec.validate();
  std::vector<std::vector<std::size_t>> by_class(ds.classes);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    const int l = ds.labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= ds.classes)
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(l) + " at example " + std::to_string(i));
    by_class[static_cast<std::size_t>(l)].push_back(i);
  }

  Rng rng(spec.seed, streams::kShotSampling);
  std::vector<std::size_t> picked;
  for (std::size_t c = 0; c < ds.classes; ++c) {
    auto& members = by_class[c];
    std::size_t need = 0;
    if (spec.k) {
      need = *spec.k;
    } else {
      // the epsilon keeps e.g. 0.1 * 50 from rounding up to 6
      need = static_cast<std::size_t>(std::ceil(*spec.fraction * static_cast<double>(members.size()) - 1e-9));
      need = std::max<std::size_t>(need, 1);
    }
    if (members.size() < need) throw InsufficientExamples(c, members.size(), need);
    rng.shuffle(std::span<std::size_t>(members));
    picked.insert(picked.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(need));
  }
  return picked;
}

void SyntheticSpec::validate() const {
  if (classes < 2) throw Error(ErrorCode::ConfigError, "synthetic benchmark needs at least 2 classes");
  if (dim < 1 || tokens < 1 || train_per_class < 1 || test_per_class < 1 || prompts < 1)
    throw Error(ErrorCode::ConfigError, "synthetic counts must be positive");
  if (!(img_noise >= 0.0) || !(txt_noise >= 0.0) || !std::isfinite(img_noise) || !std::isfinite(txt_noise))
    throw Error(ErrorCode::ConfigError, "noise levels must be finite and >= 0");
}

std::vector<std::vector<double>> synthetic_prototypes(const SyntheticSpec& spec) {
  std::vector<std::vector<double>> protos(spec.classes, std::vector<double>(spec.dim));
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Rng rng(spec.seed, class_stream(streams::kPrototypes, c));
    double ss = 0.0;
    while (ss == 0.0) {
      ss = 0.0;
      for (double& x : protos[c]) {
        x = rng.normal();
        ss += x * x;
      }
    }
    normalize(protos[c]);
  }
  return protos;
}

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto protos = synthetic_prototypes(spec);

  SyntheticData out;
  out.train = make_split(spec, protos, spec.train_per_class, streams::kTrainTokens);
  out.test = make_split(spec, protos, spec.test_per_class, streams::kTestTokens);

  std::vector<float> bank(spec.prompts * spec.classes * spec.dim);
  std::vector<double> emb;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Rng rng(spec.seed, class_stream(streams::kTextEmbeddings, c));
    for (std::size_t n = 0; n < spec.prompts; ++n) {
      noisy_unit(protos[c], spec.txt_noise, rng, emb);
      for (std::size_t d = 0; d < spec.dim; ++d)
        bank[(n * spec.classes + c) * spec.dim + d] = static_cast<float>(emb[d]);
    }
  }
  out.bank.embeddings = Tensor({spec.prompts, spec.classes, spec.dim}, std::move(bank));
  out.bank.prompt_templates = prompt_templates(spec.prompts);
  for (std::size_t c = 0; c < spec.classes; ++c) out.bank.class_names.push_back("class_" + std::to_string(c));
  return out;
}

std::filesystem::path save_synthetic(const std::filesystem::path& dir, const SyntheticData& data,
                                     const SyntheticSpec& spec) {
  std::filesystem::create_directories(dir);
  write_tensor(dir / "train_tokens.cnit", data.train.tokens);
  write_tensor(dir / "train_labels.cnit", labels_to_tensor(data.train.labels));
  write_tensor(dir / "test_tokens.cnit", data.test.tokens);
  write_tensor(dir / "test_labels.cnit", labels_to_tensor(data.test.labels));
  write_tensor(dir / "bank.cnit", data.bank.embeddings);

  ManifestDocument doc;
  doc.classes = spec.classes;
  doc.dim = spec.dim;
  doc.tokens_per_example = spec.tokens;
  doc.class_names = data.bank.class_names;
  doc.splits["train"] = {"train_tokens.cnit", "train_labels.cnit"};
  doc.splits["test"] = {"test_tokens.cnit", "test_labels.cnit"};
  doc.bank_path = "bank.cnit";
  doc.prompt_templates = data.bank.prompt_templates;
  nlohmann::ordered_json g;
  g["kind"] = "synthetic";
  g["classes"] = spec.classes;
  g["dim"] = spec.dim;
  g["tokens"] = spec.tokens;
  g["train_per_class"] = spec.train_per_class;
  g["test_per_class"] = spec.test_per_class;
  g["prompts"] = spec.prompts;
  g["img_noise"] = spec.img_noise;
  g["txt_noise"] = spec.txt_noise;
  g["seed"] = spec.seed;
  doc.generator_json = g.dump();
  const auto path = dir / "manifest.json";
  write_manifest(path, doc);
  return path;
}

}  // namespace cni
