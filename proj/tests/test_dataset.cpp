#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "cni/dataset.hpp"
#include "cni/errors.hpp"
#include "cni/tensorio.hpp"

using namespace cni;

namespace {

EmbeddingDataset labeled(std::vector<int> labels, std::size_t classes) {
  EmbeddingDataset ds;
  ds.tokens = Tensor::zeros({labels.size(), 1, 2});
  ds.labels = std::move(labels);
  ds.classes = classes;
  return ds;
}

// Independent re-implementation of the documented sampling recipe.
struct RefRng {
  std::uint64_t s;
  explicit RefRng(std::uint64_t seed) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    s = z ^ (z >> 31);
  }
  std::uint64_t next() {
    s ^= s >> 12;
    s ^= s << 25;
    s ^= s >> 27;
    return s * 0x2545F4914F6CDD1DULL;
  }
};

std::vector<std::size_t> reference_sample(const std::vector<int>& labels, std::size_t classes, std::size_t k,
                                          std::uint64_t seed) {
  RefRng rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == static_cast<int>(c)) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.next() % i]);
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

// Cosine oracle: argmax_c cos(mean token, mean text embedding of c).
double cosine_zero_shot(const SyntheticData& d) {
  const auto& bank = d.bank.embeddings;
  const std::size_t N = bank.dim(0), C = bank.dim(1), D = bank.dim(2), T = d.test.tokens.dim(1);
  std::vector<std::vector<double>> text(C, std::vector<double>(D, 0.0));
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < D; ++k) text[c][k] += bank.data[(n * C + c) * D + k];
  std::size_t hits = 0;
  for (std::size_t e = 0; e < d.test.size(); ++e) {
    std::vector<double> m(D, 0.0);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < D; ++k) m[k] += d.test.tokens.data[(e * T + t) * D + k];
    std::size_t best = 0;
    double best_cos = -2.0;
    for (std::size_t c = 0; c < C; ++c) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < D; ++k) dot += m[k] * text[c][k], na += m[k] * m[k], nb += text[c][k] * text[c][k];
      const double cs = dot / std::sqrt(na * nb);
      if (cs > best_cos) best_cos = cs, best = c;
    }
    hits += static_cast<int>(best) == d.test.labels[e];
  }
  return static_cast<double>(hits) / static_cast<double>(d.test.size());
}

}  // namespace

TEST(SampleKShot, KEqualToClassSizeTakesEverything) {
  const auto ds = labeled({0, 0, 1, 1}, 2);
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    auto idx = sample_k_shot(ds, ShotSpec::shots(2, seed));
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2, 3}));
  }
}

TEST(SampleKShot, OneShotSeedSevenMatchesReferenceRecipe) {
  const auto ds = labeled({0, 0, 1, 1}, 2);
  const auto idx = sample_k_shot(ds, ShotSpec::shots(1, 7));
  EXPECT_EQ(idx, reference_sample(ds.labels, 2, 1, 7));
  ASSERT_EQ(idx.size(), 2u);
  EXPECT_LT(idx[0], 2u);
  EXPECT_GE(idx[1], 2u);
}

TEST(SampleKShot, MatchesReferenceOnInterleavedLabels) {
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) labels.push_back((i * 7) % 5);
  const auto ds = labeled(labels, 5);
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    for (std::size_t k : {1u, 3u, 12u}) EXPECT_EQ(sample_k_shot(ds, ShotSpec::shots(k, seed)), reference_sample(labels, 5, k, seed));
}

TEST(SampleKShot, InsufficientExamplesReportsClassHaveNeed) {
  const auto ds = labeled({0}, 1);
  try {
    sample_k_shot(ds, ShotSpec::shots(2, 0));
    FAIL();
  } catch (const InsufficientExamples& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientExamples);
    EXPECT_EQ(e.class_index, 0u);
    EXPECT_EQ(e.have, 1u);
    EXPECT_EQ(e.need, 2u);
  }
}

TEST(SampleKShot, BalancedDistinctAndDeterministic) {
  SyntheticSpec spec;
  spec.classes = 7;
  spec.train_per_class = 9;
  spec.seed = 3;
  const auto d = make_synthetic(spec);
  for (std::size_t k = 1; k <= 9; ++k) {
    const auto idx = sample_k_shot(d.train, ShotSpec::shots(k, 40 + k));
    EXPECT_EQ(idx, sample_k_shot(d.train, ShotSpec::shots(k, 40 + k)));
    ASSERT_EQ(idx.size(), 7 * k);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), idx.size());
    std::vector<std::size_t> per(7, 0);
    for (auto i : idx) per[static_cast<std::size_t>(d.train.labels[i])]++;
    for (auto n : per) EXPECT_EQ(n, k);
  }
}

TEST(SampleKShot, FractionRoundsUpPerClass) {
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 10 + c; ++i) labels.push_back(c);
  const auto ds = labeled(labels, 3);
  // ceil(0.25 * 10) = 3, ceil(0.25 * 11) = 3, ceil(0.25 * 12) = 3
  EXPECT_EQ(sample_k_shot(ds, ShotSpec::portion(0.25, 1)).size(), 9u);
  // tiny fractions still keep one example per class
  EXPECT_EQ(sample_k_shot(ds, ShotSpec::portion(1e-6, 1)).size(), 3u);
  EXPECT_EQ(sample_k_shot(ds, ShotSpec::portion(1.0, 1)).size(), labels.size());
  // exact products are not bumped by float noise: 0.3 * 10 = 3
  const auto ten = labeled(std::vector<int>(10, 0), 1);
  EXPECT_EQ(sample_k_shot(ten, ShotSpec::portion(0.3, 2)).size(), 3u);
}

TEST(ShotSpecValidation, RejectsBadSpecs) {
  EXPECT_THROW(ShotSpec::shots(0, 1).validate(), Error);
  EXPECT_THROW(ShotSpec::portion(0.0, 1).validate(), Error);
  EXPECT_THROW(ShotSpec::portion(1.5, 1).validate(), Error);
  EXPECT_THROW((ShotSpec{std::size_t{1}, 0.5, 0}).validate(), Error);
  EXPECT_THROW((ShotSpec{std::nullopt, std::nullopt, 0}).validate(), Error);
}

TEST(Synthetic, NoiselessTokensEqualPrototypes) {
  SyntheticSpec spec;
  spec.classes = 5;
  spec.dim = 8;
  spec.img_noise = 0.0;
  spec.txt_noise = 0.0;
  spec.seed = 17;
  const auto d = make_synthetic(spec);
  const auto protos = synthetic_prototypes(spec);
  const std::size_t T = spec.tokens, D = spec.dim;
  for (std::size_t e = 0; e < d.train.size(); ++e)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < D; ++k)
        ASSERT_NEAR(d.train.tokens.data[(e * T + t) * D + k], protos[static_cast<std::size_t>(d.train.labels[e])][k], 1e-6);
  EXPECT_DOUBLE_EQ(cosine_zero_shot(d), 1.0);
}

TEST(Synthetic, SameSeedBitIdenticalDifferentSeedDiffers) {
  SyntheticSpec spec;
  spec.seed = 5;
  const auto a = make_synthetic(spec), b = make_synthetic(spec);
  EXPECT_EQ(encode_tensor(a.train.tokens), encode_tensor(b.train.tokens));
  EXPECT_EQ(encode_tensor(a.test.tokens), encode_tensor(b.test.tokens));
  EXPECT_EQ(encode_tensor(a.bank.embeddings), encode_tensor(b.bank.embeddings));
  EXPECT_EQ(a.train.labels, b.train.labels);
  spec.seed = 6;
  EXPECT_FALSE(bit_equal(make_synthetic(spec).train.tokens, a.train.tokens));
}

TEST(Synthetic, RowsAreUnitNorm) {
  SyntheticSpec spec;
  spec.seed = 2;
  const auto d = make_synthetic(spec);
  auto check = [&](const Tensor& t) {
    const std::size_t D = t.shape.back();
    for (std::size_t r = 0; r < t.numel() / D; ++r) {
      double ss = 0.0;
      for (std::size_t k = 0; k < D; ++k) ss += double(t.data[r * D + k]) * t.data[r * D + k];
      ASSERT_NEAR(std::sqrt(ss), 1.0, 1e-6);
    }
  };
  check(d.train.tokens);
  check(d.test.tokens);
  check(d.bank.embeddings);
}

TEST(Synthetic, ShapesAndLayout) {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.dim = 6;
  spec.tokens = 2;
  spec.train_per_class = 3;
  spec.test_per_class = 5;
  spec.prompts = 7;
  const auto d = make_synthetic(spec);
  EXPECT_EQ(d.train.tokens.shape, (Shape{12, 2, 6}));
  EXPECT_EQ(d.test.tokens.shape, (Shape{20, 2, 6}));
  EXPECT_EQ(d.bank.embeddings.shape, (Shape{7, 4, 6}));
  EXPECT_EQ(d.bank.prompt_templates.size(), 7u);
  EXPECT_EQ(d.train.labels, (std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3}));
}

TEST(Synthetic, OneClassRejected) {
  SyntheticSpec spec;
  spec.classes = 1;
  EXPECT_THROW(spec.validate(), Error);
  spec.classes = 3;
  spec.img_noise = -0.1;
  EXPECT_THROW(spec.validate(), Error);
}

// Per-seed cosine-oracle accuracies for C=3, D=16, sigma_img=0.3 (other settings at their defaults).
TEST(Synthetic, SmallBenchmarkIsSeparableByCosineOracle) {
  const double recorded[5] = {1.0, 1.0, 1.0, 1.0, 149.0 / 150.0};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.dim = 16;
    spec.img_noise = 0.3;
    spec.seed = seed;
    const double acc = cosine_zero_shot(make_synthetic(spec));
    EXPECT_GE(acc, 0.9);
    EXPECT_DOUBLE_EQ(acc, recorded[seed - 1]);
  }
}
