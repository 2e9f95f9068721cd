// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <unistd.h>

#include "domlora/probe.h"
#include "domlora/tasks.h"
#include "domlora/validation.h"
#include "gtest/gtest.h"

namespace domlora {
namespace {

ModelConfig SmallConfig() {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.vocab_size = 12;
  c.max_seq_len = 10;
  return c;
}

TEST(ProbeSampleTest, Validate) {
  ProbeSample ok{{1, 2, 3}, {false, true, true}};
  EXPECT_NO_THROW(ok.Validate());
  EXPECT_EQ(ok.num_supervised(), 2u);
  ProbeSample empty_mask{{1, 2, 3}, {false, false, false}};
  EXPECT_THROW(empty_mask.Validate(), std::invalid_argument);
  ProbeSample mismatch{{1, 2, 3}, {false, true}};
  EXPECT_THROW(mismatch.Validate(), std::invalid_argument);
  ProbeSample first_position{{1, 2}, {true, true}};
  EXPECT_THROW(first_position.Validate(), std::invalid_argument);
}

TEST(MaskedCrossEntropyTest, PerfectPredictionIsZero) {
  const ProbeSample s{{0, 3, 1, 2}, {false, true, true, true}};
  Matrix logits(4, 5);
  for (std::size_t t = 1; t < 4; ++t) logits(t - 1, s.tokens[t]) = 1000.0;
  EXPECT_EQ(MaskedCrossEntropy(logits, s), 0.0);
}

TEST(MaskedCrossEntropyTest, UniformLogitsGiveLogVocab) {
  const ProbeSample s{{0, 3, 1, 2}, {false, false, true, true}};
  EXPECT_NEAR(MaskedCrossEntropy(Matrix(4, 64), s), std::log(64.0), 1e-12);
  EXPECT_NEAR(MaskedCrossEntropy(Matrix(4, 64, 3.5), s), 4.1588830833596715, 1e-12);
}

TEST(MaskedCrossEntropyTest, MeanOfPositionLosses) {
  Rng rng(2);
  const Matrix logits = UniformMatrix(rng, 3, 6, 2.0);
  const ProbeSample only1{{0, 4, 2}, {false, true, false}};
  const ProbeSample only2{{0, 4, 2}, {false, false, true}};
  const ProbeSample both{{0, 4, 2}, {false, true, true}};
  const double a = MaskedCrossEntropy(logits, only1);
  const double b = MaskedCrossEntropy(logits, only2);
  EXPECT_NEAR(MaskedCrossEntropy(logits, both), (a + b) / 2, 1e-14);
  // Direct log-softmax evaluation of the single-position loss.
  double denom = 0;
  for (std::size_t v = 0; v < 6; ++v) denom += std::exp(logits(0, v));
  EXPECT_NEAR(a, std::log(denom) - logits(0, 4), 1e-12);
}

TEST(MaskedCrossEntropyTest, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  Matrix logits = UniformMatrix(rng, 4, 7, 2.0);
  const ProbeSample s{{0, 4, 2, 6}, {false, true, false, true}};
  Matrix grad;
  MaskedCrossEntropy(logits, s, &grad);
  const Matrix fd = FiniteDifferenceGradient(
      logits, [&] { return MaskedCrossEntropy(logits, s); }, 1e-5);
  EXPECT_LT(RelativeError(grad, fd), 1e-8);
  for (std::size_t v = 0; v < 7; ++v) EXPECT_EQ(grad(3, v), 0.0);
}

TEST(ProbeLossTest, RejectsOverLengthSample) {
  Rng rng(1);
  const ModelParams p = ModelParams::Random(SmallConfig(), rng);
  ProbeSample s;
  s.tokens.assign(11, 1);
  s.response_mask.assign(11, true);
  s.response_mask[0] = false;
  EXPECT_THROW(ProbeLoss(p, s), std::invalid_argument);
  EXPECT_THROW(SampleGradient(p, s), std::invalid_argument);
}

// Scaling the per-position logit gradient by c scales every projection
// gradient by c.
TEST(SampleGradientTest, LinearInLossScale) {
  Rng rng(4);
  const ModelParams p = ModelParams::Random(SmallConfig(), rng);
  const ProbeSample s = RandomSample(p.config, 6, rng);
  ForwardResult fr = Forward(p, s.tokens);
  Matrix dlogits;
  MaskedCrossEntropy(fr.logits, s, &dlogits);
  const auto modules = AllModules(p.config);
  const GradientSet g1 = BackwardProjectionGrads(p, fr.cache, dlogits, modules);
  const GradientSet g3 = BackwardProjectionGrads(p, fr.cache, 3.0 * dlogits, modules);
  for (const auto& [id, g] : g1) {
    const Matrix& scaled = g3.at(id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_NEAR(scaled[i], 3.0 * g[i], 1e-13 * (1 + std::abs(g[i])));
    }
  }
}

TEST(SampleGradientTest, SubsetMatchesFullAndIgnoresOrder) {
  Rng rng(5);
  const ModelParams p = ModelParams::Random(SmallConfig(), rng);
  const auto set = GenerateSet({TaskKind::kCopy, 12, 4}, 4, 9);
  const auto grads = SampleGradients(p, set);
  const std::vector<ModuleId> subset = {{1, ProjKind::kDown}, {0, ProjKind::kQ}};
  const GradientSet part = SampleGradient(p, set[2], subset);
  EXPECT_EQ(part.size(), 2u);
  for (const auto& id : subset) EXPECT_EQ(part.at(id), grads[2].at(id));

  std::vector<ProbeSample> reversed(set.rbegin(), set.rend());
  const auto grads_rev = SampleGradients(p, reversed);
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (const auto& [id, g] : grads[i]) EXPECT_EQ(g, grads_rev[set.size() - 1 - i].at(id));
  }
}

TEST(SampleGradientTest, WorkersDoNotChangeResults) {
  Rng rng(6);
  const ModelParams p = ModelParams::Random(SmallConfig(), rng);
  const auto set = GenerateSet({TaskKind::kModAdd, 12}, 6, 1);
  const SensitivityMap one = ModuleSensitivity(p, set, 1);
  const SensitivityMap three = ModuleSensitivity(p, set, 3);
  EXPECT_EQ(one.values, three.values);
}

TEST(SensitivityTest, HandBuiltGradients) {
  const ModuleId id{0, ProjKind::kDown};
  std::vector<GradientSet> grads(2);
  grads[0][id] = Matrix{{1, 0}, {0, 0}};
  grads[1][id] = Matrix{{0, 0}, {0, 3}};
  const SensitivityMap s = SensitivityFromGradients(grads);
  EXPECT_EQ(s.at(id), 5.0);
  EXPECT_EQ(s.num_samples, 2u);
  std::vector<GradientSet> single = {grads[1]};
  EXPECT_EQ(SensitivityFromGradients(single).at(id), 9.0);
  EXPECT_THROW(s.at({1, ProjKind::kDown}), std::out_of_range);
}

TEST(SensitivityTest, MissingModuleRejected) {
  std::vector<GradientSet> grads(2);
  grads[0][{0, ProjKind::kQ}] = Matrix(1, 1);
  grads[1][{0, ProjKind::kK}] = Matrix(1, 1);
  EXPECT_THROW(SensitivityFromGradients(grads), std::invalid_argument);
}

TEST(SensitivityTest, EmptyProbeSetRejected) {
  const ModelParams p = ModelParams::Zeros(SmallConfig());
  std::vector<ProbeSample> none;
  EXPECT_THROW(ModuleSensitivity(p, none), std::invalid_argument);
}

TEST(SensitivityTest, DuplicationAndPermutationInvariant) {
  Rng rng(7);
  const ModelParams p = ModelParams::Random(SmallConfig(), rng);
  auto set = GenerateSet({TaskKind::kCopy, 12, 4}, 5, 3);
  const SensitivityMap base = ModuleSensitivity(p, set);
  auto doubled = set;
  doubled.insert(doubled.end(), set.begin(), set.end());
  const SensitivityMap dup = ModuleSensitivity(p, doubled);
  std::swap(set[0], set[4]);
  std::swap(set[1], set[3]);
  const SensitivityMap perm = ModuleSensitivity(p, set);
  for (const auto& [id, v] : base.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_NEAR(dup.at(id), v, 1e-14 * v);
    EXPECT_NEAR(perm.at(id), v, 1e-14 * v);
  }
}

TEST(SensitivityTest, ZeroIffAllGradientsZero) {
  const ModelParams p = ModelParams::Zeros(SmallConfig());
  const auto set = GenerateSet({TaskKind::kCopy, 12, 4}, 3, 3);
  const SensitivityMap s = ModuleSensitivity(p, set);
  for (const auto& [id, v] : s.values) EXPECT_EQ(v, 0.0) << ModuleName(id);
}

TEST(FisherTraceTest, MatchesSensitivityOnRandomGradients) {
  Rng rng(8);
  const ModuleId id{1, ProjKind::kUp};
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.Below(10);
    const std::size_t rows = 1 + rng.Below(8), cols = 1 + rng.Below(8);
    std::vector<GradientSet> grads(n);
    for (auto& g : grads) g[id] = UniformMatrix(rng, rows, cols, rng.Uniform(0.1, 10));
    const FisherTraceResult r = FisherTraceCheck(grads, id);
    EXPECT_LE(std::abs(r.trace - r.sensitivity), 1e-12 * r.sensitivity);
    EXPECT_NEAR(r.sensitivity, SensitivityFromGradients(grads).at(id), 1e-12 * r.sensitivity);
  }
}

TEST(FisherTraceTest, SmallCases) {
  const ModuleId id{0, ProjKind::kQ};
  std::vector<GradientSet> one(1);
  one[0][id] = Matrix{{-3}};
  const FisherTraceResult r = FisherTraceCheck(one, id);
  EXPECT_EQ(r.trace, 9.0);
  EXPECT_EQ(r.sensitivity, 9.0);
  std::vector<GradientSet> zeros(3);
  for (auto& g : zeros) g[id] = Matrix(2, 2);
  const FisherTraceResult z = FisherTraceCheck(zeros, id);
  EXPECT_EQ(z.trace, 0.0);
  EXPECT_EQ(z.sensitivity, 0.0);
  zeros[1][id] = Matrix(2, 3);
  EXPECT_THROW(FisherTraceCheck(zeros, id), std::invalid_argument);
  EXPECT_THROW(FisherTraceCheck({}, id), std::invalid_argument);
}

TEST(TasksTest, CopySampleLayout) {
  Rng rng(1);
  const ProbeSample s = GenerateSample({TaskKind::kCopy, 64, 5}, rng);
  ASSERT_EQ(s.tokens.size(), 12u);
  EXPECT_EQ(s.tokens[0], kBos);
  EXPECT_EQ(s.tokens[6], kSep);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_GE(s.tokens[1 + i], kFirstContent);
    EXPECT_EQ(s.tokens[1 + i], s.tokens[7 + i]);
    EXPECT_FALSE(s.response_mask[1 + i]);
    EXPECT_TRUE(s.response_mask[7 + i]);
  }
}

TEST(TasksTest, ModAddIsCorrect) {
  Rng rng(2);
  const TaskSpec spec{TaskKind::kModAdd, 20};
  for (int i = 0; i < 50; ++i) {
    const ProbeSample s = GenerateSample(spec, rng);
    ASSERT_EQ(s.tokens.size(), 6u);
    const Token a = s.tokens[1] - kFirstContent, b = s.tokens[3] - kFirstContent;
    EXPECT_EQ(s.tokens[5] - kFirstContent, (a + b) % 16);
    EXPECT_EQ(s.num_supervised(), 1u);
    EXPECT_TRUE(s.response_mask[5]);
  }
}

TEST(TasksTest, SetsAreSeededAndParseable) {
  const TaskSpec spec{TaskKind::kCopy, 64, 6};
  EXPECT_EQ(GenerateSet(spec, 8, 5), GenerateSet(spec, 8, 5));
  EXPECT_NE(GenerateSet(spec, 8, 5), GenerateSet(spec, 8, 6));
  EXPECT_EQ(ParseTask("mod-add"), TaskKind::kModAdd);
  EXPECT_EQ(TaskName(TaskKind::kCopy), "copy");
  EXPECT_FALSE(ParseTask("sort").has_value());
}

class ProbeFileTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("domlora_probe_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(ProbeFileTest, RoundTrip) {
  const auto set = GenerateSet({TaskKind::kModAdd, 30}, 10, 4);
  const auto path = dir_ / "probe.jsonl";
  SaveProbeSet(path, set);
  EXPECT_EQ(LoadProbeSet(path), set);
}

TEST_F(ProbeFileTest, ErrorsNameTheLine) {
  const auto path = dir_ / "bad.jsonl";
  std::ofstream(path) << "{\"tokens\":[0,5],\"mask\":[0,1]}\n"
                      << "\n"
                      << "{\"tokens\":[0,5,6],\"mask\":[0,1]}\n";
  try {
    LoadProbeSet(path);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("bad.jsonl:3:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(LoadProbeSet(dir_ / "missing.jsonl"), std::runtime_error);
}

}  // namespace
}  // namespace domlora
