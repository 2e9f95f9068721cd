// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <stdexcept>

#include "domlora/rng.h"
#include "domlora/tensor.h"
#include "gtest/gtest.h"

namespace domlora {
namespace {

TEST(TensorTest, FrobeniusSqExamples) {
  EXPECT_EQ(FrobeniusSq(Matrix(3, 4)), 0.0);
  EXPECT_EQ(FrobeniusSq(Matrix{{1, 2}, {3, 4}}), 30.0);
  EXPECT_EQ(FrobeniusSq(Matrix::Identity(5)), 5.0);
}

TEST(TensorTest, TraceOfGramExamples) {
  EXPECT_EQ(TraceOfGram(Matrix{{1, 2}, {3, 4}}), 30.0);
  EXPECT_EQ(TraceOfGram(Matrix(2, 3)), 0.0);
  EXPECT_EQ(TraceOfGram(Matrix{{-2}}), 4.0);
}

TEST(TensorTest, TraceOfGramMatchesLiteralGram) {
  Rng rng(3);
  const Matrix m = UniformMatrix(rng, 5, 7, 2.0);
  EXPECT_NEAR(TraceOfGram(m), Trace(MatMulTN(m, m)), 1e-12 * FrobeniusSq(m));
}

// Property: the trace and norm routes agree bit for bit on random shapes and
// magnitudes, and flattening preserves the squared norm.
TEST(TensorTest, NormIdentitiesOnRandomMatrices) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng.Below(9);
    const std::size_t cols = 1 + rng.Below(9);
    const Matrix m = UniformMatrix(rng, rows, cols, std::pow(10.0, rng.Uniform(-4, 4)));
    ASSERT_EQ(TraceOfGram(m), FrobeniusSq(m));
    const auto v = Vectorize(m);
    ASSERT_EQ(v.size(), rows * cols);
    ASSERT_NEAR(SquaredNorm(v), FrobeniusSq(m), 1e-14 * FrobeniusSq(m));
  }
}

TEST(TensorTest, MatMulVariantsAgree) {
  Rng rng(5);
  const Matrix a = UniformMatrix(rng, 3, 4, 1.0);
  const Matrix b = UniformMatrix(rng, 4, 5, 1.0);
  const Matrix ab = MatMul(a, b);
  const Matrix ab_nt = MatMulNT(a, Transpose(b));
  const Matrix ab_tn = MatMulTN(Transpose(a), b);
  for (std::size_t i = 0; i < ab.size(); ++i) {
    EXPECT_NEAR(ab[i], ab_nt[i], 1e-14);
    EXPECT_NEAR(ab[i], ab_tn[i], 1e-14);
  }
  // Hand-computed product.
  const Matrix p = MatMul(Matrix{{1, 2}, {3, 4}}, Matrix{{5, 6}, {7, 8}});
  EXPECT_EQ(p, (Matrix{{19, 22}, {43, 50}}));
}

TEST(TensorTest, ShapeErrors) {
  EXPECT_THROW(MatMul(Matrix(2, 3), Matrix(2, 3)), std::invalid_argument);
  Matrix a(2, 2);
  EXPECT_THROW(a += Matrix(3, 2), std::invalid_argument);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>(3)), std::invalid_argument);
}

TEST(RngTest, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.NextU64();
    ASSERT_EQ(x, b.NextU64());
    any_diff |= x != c.NextU64();
  }
  EXPECT_TRUE(any_diff);
}

TEST(RngTest, KnownFirstDraws) {
  // Frozen values: guards against accidental changes to the generator,
  // which would silently change every seeded artifact.
  Rng rng(0);
  const std::uint64_t first = rng.NextU64();
  Rng again(0);
  EXPECT_EQ(first, again.NextU64());
  EXPECT_EQ(Rng::Mix(0), 0u);
  EXPECT_EQ(Rng::Mix(1), 0x5692161d100b05e5ULL);
}

TEST(RngTest, SplitStreamsAreIndependentOfParentPosition) {
  Rng parent(7);
  const Rng child_before = parent.Split(3);
  parent.NextU64();
  parent.NextU64();
  Rng c1 = child_before;
  Rng c2 = parent.Split(3);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(c1.NextU64(), c2.NextU64());
  Rng other = Rng(7).Split(4);
  Rng c3 = Rng(7).Split(3);
  EXPECT_NE(c3.NextU64(), other.NextU64());
}

TEST(RngTest, BelowIsInRange) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(rng.Below(7), 7u);
  EXPECT_THROW(rng.Below(0), std::invalid_argument);
}

TEST(KaimingUniformTest, Bounds) {
  Rng rng(9);
  const Matrix a = KaimingUniform(rng, 4, 16);
  EXPECT_EQ(a.rows(), 4u);
  EXPECT_EQ(a.cols(), 16u);
  for (double v : a.data()) EXPECT_LE(std::abs(v), 0.25);
  const Matrix unit = KaimingUniform(rng, 1, 1);
  EXPECT_LE(std::abs(unit[0]), 1.0);
  EXPECT_THROW(KaimingUniform(rng, 0, 4), std::invalid_argument);
  EXPECT_THROW(KaimingUniform(rng, 4, 0), std::invalid_argument);
}

TEST(KaimingUniformTest, Deterministic) {
  Rng a(123), b(123);
  EXPECT_EQ(KaimingUniform(a, 8, 12), KaimingUniform(b, 8, 12));
}

// Monte Carlo oracle for the entry moments: mean 0, second moment 1/(3 d_in).
TEST(KaimingUniformTest, SecondMomentMatchesUniformVariance) {
  constexpr std::size_t kDraws = 1000000;
  constexpr std::size_t kDin = 12;
  Rng rng(2024);
  const Matrix a = KaimingUniform(rng, kDraws / kDin, kDin);
  double sum = 0, sum2 = 0, sum4 = 0;
  for (double v : a.data()) {
    sum += v;
    sum2 += v * v;
    sum4 += v * v * v * v;
  }
  const double n = static_cast<double>(a.size());
  const double mean_sq = sum2 / n;
  const double var_sq = sum4 / n - mean_sq * mean_sq;
  const double se_sq = std::sqrt(var_sq / n);
  EXPECT_NEAR(mean_sq, 1.0 / 36.0, 3 * se_sq);
  const double se_mean = std::sqrt(mean_sq / n);
  EXPECT_NEAR(sum / n, 0.0, 4 * se_mean);
}

}  // namespace
}  // namespace domlora
