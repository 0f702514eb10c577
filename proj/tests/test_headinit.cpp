#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cni/errors.hpp"
#include "cni/headinit.hpp"
#include "cni/rng.hpp"

using namespace cni;

namespace {

TextEmbeddingBank random_bank(std::size_t N, std::size_t C, std::size_t D, std::uint64_t seed) {
  TextEmbeddingBank bank;
  bank.embeddings = Tensor::zeros({N, C, D});
  Rng rng(seed, 99);
  for (auto& v : bank.embeddings.data) v = static_cast<float>(rng.normal());
  return bank;
}

double row_norm(const Tensor& t, std::size_t r) {
  const std::size_t D = t.shape[1];
  double ss = 0.0;
  for (std::size_t k = 0; k < D; ++k) ss += double(t.data[r * D + k]) * t.data[r * D + k];
  return std::sqrt(ss);
}

}  // namespace

TEST(AverageText, SinglePromptIsNormalizedEmbedding) {
  const auto bank = random_bank(1, 4, 5, 1);
  const auto avg = average_text_embeddings(bank);
  for (std::size_t c = 0; c < 4; ++c) {
    double ss = 0.0;
    for (std::size_t k = 0; k < 5; ++k) ss += double(bank.embeddings.data[c * 5 + k]) * bank.embeddings.data[c * 5 + k];
    for (std::size_t k = 0; k < 5; ++k)
      EXPECT_NEAR(avg.data[c * 5 + k], bank.embeddings.data[c * 5 + k] / std::sqrt(ss), 1e-7);
  }
}

TEST(AverageText, TwoOrthogonalPromptsAverageToDiagonal) {
  TextEmbeddingBank bank;
  bank.embeddings = Tensor({2, 1, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  const auto avg = average_text_embeddings(bank);
  ASSERT_EQ(avg.shape, (Shape{1, 2}));
  EXPECT_NEAR(avg.data[0], 0.70710678, 1e-7);
  EXPECT_NEAR(avg.data[1], 0.70710678, 1e-7);
}

TEST(AverageText, MatchesBruteForceDoubleLoop) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto bank = random_bank(3, 2, 8, seed);
    const auto avg = average_text_embeddings(bank);
    for (std::size_t c = 0; c < 2; ++c) {
      double m[8] = {0}, ss = 0.0;
      for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t k = 0; k < 8; ++k) m[k] += bank.embeddings.data[(n * 2 + c) * 8 + k] / 3.0;
      for (double v : m) ss += v * v;
      for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(avg.data[c * 8 + k], m[k] / std::sqrt(ss), 1e-6);
    }
  }
}

TEST(AverageText, InvariantToPromptOrderAndScale) {
  const auto bank = random_bank(4, 3, 6, 7);
  auto permuted = bank;
  auto scaled = bank;
  const std::size_t row = 3 * 6;
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t i = 0; i < row; ++i) permuted.embeddings.data[n * row + i] = bank.embeddings.data[(3 - n) * row + i];
  for (auto& v : scaled.embeddings.data) v *= 4.0f;
  const auto a = average_text_embeddings(bank), b = average_text_embeddings(permuted), c = average_text_embeddings(scaled);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    EXPECT_NEAR(a.data[i], b.data[i], 1e-7);
    EXPECT_NEAR(a.data[i], c.data[i], 1e-7);
  }
}

TEST(AverageText, CancellingPromptsThrowZeroNormRow) {
  TextEmbeddingBank bank;
  bank.embeddings = Tensor({2, 2, 2}, {1, 0, 0, 1, 1, 1, 0, -1});
  try {
    average_text_embeddings(bank);
    FAIL();
  } catch (const ZeroNormRow& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroNormRow);
    EXPECT_EQ(e.row, 1u);
  }
}

TEST(AverageText, NonFiniteBankRejected) {
  auto bank = random_bank(2, 2, 2, 0);
  bank.embeddings.data[3] = std::nanf("");
  EXPECT_THROW(average_text_embeddings(bank), Error);
}

TEST(InitHead, CategoryNamesCopiesAverageWithZeroBias) {
  const auto avg = average_text_embeddings(random_bank(3, 5, 4, 2));
  const auto head = init_head({HeadInitMode::CategoryNames, std::nullopt, 0}, &avg, 5, 4);
  EXPECT_TRUE(bit_equal(head.weight, avg));
  for (float b : head.bias.data) EXPECT_EQ(b, 0.0f);
  EXPECT_EQ(head.text_rows(), 5u);
}

TEST(InitHead, RandomRowsUnitNormBiasExactlyZero) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto head = init_head({HeadInitMode::Random, std::nullopt, seed}, nullptr, 7, 9);
    for (std::size_t c = 0; c < 7; ++c) EXPECT_NEAR(row_norm(head.weight, c), 1.0, 1e-6);
    for (float b : head.bias.data) EXPECT_EQ(b, 0.0f);
    EXPECT_EQ(head.text_rows(), 0u);
  }
}

TEST(InitHead, DeterministicPerSeed) {
  const auto a = init_head({HeadInitMode::Random, std::nullopt, 4}, nullptr, 6, 8);
  const auto b = init_head({HeadInitMode::Random, std::nullopt, 4}, nullptr, 6, 8);
  const auto c = init_head({HeadInitMode::Random, std::nullopt, 5}, nullptr, 6, 8);
  EXPECT_TRUE(bit_equal(a.weight, b.weight));
  EXPECT_FALSE(bit_equal(a.weight, c.weight));
}

TEST(InitHead, PartialBoundaries) {
  const auto avg = average_text_embeddings(random_bank(2, 6, 5, 3));
  const auto cni = init_head({HeadInitMode::CategoryNames, std::nullopt, 8}, &avg, 6, 5);
  const auto rnd = init_head({HeadInitMode::Random, std::nullopt, 8}, &avg, 6, 5);
  const auto full = init_head({HeadInitMode::Partial, 1.0, 8}, &avg, 6, 5);
  const auto none = init_head({HeadInitMode::Partial, 0.0, 8}, &avg, 6, 5);
  EXPECT_TRUE(bit_equal(full.weight, cni.weight));
  EXPECT_EQ(full.provenance, cni.provenance);
  EXPECT_TRUE(bit_equal(none.weight, rnd.weight));
  EXPECT_EQ(none.provenance, std::vector<RowSource>(6, RowSource::Random));
}

TEST(InitHead, PartialTakesFloorOfFractionTextRows) {
  const auto avg = average_text_embeddings(random_bank(2, 7, 4, 1));
  for (double f : {0.1, 0.25, 0.5, 0.75, 0.99}) {
    const auto head = init_head({HeadInitMode::Partial, f, 2}, &avg, 7, 4);
    EXPECT_EQ(head.text_rows(), static_cast<std::size_t>(std::floor(f * 7))) << f;
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_NEAR(row_norm(head.weight, c), 1.0, 1e-6);
      const bool same = std::equal(avg.data.begin() + c * 4, avg.data.begin() + c * 4 + 4, head.weight.data.begin() + c * 4);
      EXPECT_EQ(same, head.provenance[c] == RowSource::Text);
    }
  }
  // 0.5 * 10 = 5 exactly
  const auto avg10 = average_text_embeddings(random_bank(2, 10, 4, 1));
  EXPECT_EQ(init_head({HeadInitMode::Partial, 0.5, 0}, &avg10, 10, 4).text_rows(), 5u);
}

TEST(InitHead, ShapeErrors) {
  const auto avg = average_text_embeddings(random_bank(2, 3, 4, 1));
  auto code = [&](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::WriteError;
  };
  EXPECT_EQ(code([&] { init_head({HeadInitMode::CategoryNames, std::nullopt, 0}, &avg, 4, 4); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code([&] { init_head({HeadInitMode::CategoryNames, std::nullopt, 0}, nullptr, 3, 4); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code([&] { init_head({HeadInitMode::Partial, 0.5, 0}, &avg, 3, 5); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code([&] { init_head({HeadInitMode::Partial, std::nullopt, 0}, &avg, 3, 4); }), ErrorCode::ConfigError);
  EXPECT_EQ(code([&] { init_head({HeadInitMode::Partial, 1.5, 0}, &avg, 3, 4); }), ErrorCode::ConfigError);
}

TEST(InitHead, ModeNames) {
  EXPECT_EQ(parse_head_init_mode("CNI"), HeadInitMode::CategoryNames);
  EXPECT_EQ(parse_head_init_mode("random"), HeadInitMode::Random);
  EXPECT_EQ(parse_head_init_mode("Partial"), HeadInitMode::Partial);
  EXPECT_THROW(parse_head_init_mode("names"), Error);
  EXPECT_STREQ(to_string(HeadInitMode::CategoryNames), "cni");
}
