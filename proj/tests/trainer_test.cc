// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "domlora/tasks.h"
#include "domlora/trainer.h"
#include "gtest/gtest.h"

namespace domlora {
namespace {

TEST(ScheduleTest, Endpoints) {
  TrainConfig cfg;
  cfg.steps = 200;
  cfg.peak_lr = 1e-2;
  EXPECT_EQ(cfg.warmup_steps(), 6u);
  EXPECT_EQ(LrAt(0, cfg), 0.0);
  EXPECT_EQ(LrAt(6, cfg), 1e-2);
  EXPECT_NEAR(LrAt(200, cfg), 0.0, 1e-12);
  EXPECT_NEAR(LrAt(3, cfg), 5e-3, 1e-15);
  EXPECT_THROW(LrAt(201, cfg), std::out_of_range);
}

TEST(ScheduleTest, ShapeAcrossBudgets) {
  for (std::size_t steps : {2u, 3u, 10u, 33u, 100u, 390u, 1000u}) {
    TrainConfig cfg;
    cfg.steps = steps;
    const std::size_t w = cfg.warmup_steps();
    ASSERT_GE(w, 1u);
    ASSERT_LT(w, steps);
    double prev = LrAt(0, cfg);
    std::size_t peaks = 0;
    for (std::size_t k = 1; k <= steps; ++k) {
      const double lr = LrAt(k, cfg);
      if (k <= w) {
        EXPECT_GT(lr, prev);
      } else {
        EXPECT_LE(lr, prev);
        // Continuity: no jump larger than the steepest warmup or cosine slope.
        EXPECT_LE(prev - lr, cfg.peak_lr * std::numbers::pi / 2 / double(steps - w) + 1e-15);
      }
      peaks += lr == cfg.peak_lr;
      prev = lr;
    }
    EXPECT_EQ(peaks, 1u) << steps;
    EXPECT_NEAR(LrAt(steps, cfg), 0.0, 1e-12);
  }
}

TEST(TrainConfigTest, Validate) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  cfg.warmup_ratio = 0.0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg = TrainConfig();
  cfg.warmup_ratio = 1.0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg = TrainConfig();
  cfg.peak_lr = 0.0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg = TrainConfig();
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
}

class TrainerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    config_.n_layers = 2;
    config_.d_model = 16;
    config_.n_heads = 2;
    config_.d_ff = 32;
    config_.vocab_size = 20;
    config_.max_seq_len = 8;
    Rng rng(21);
    base_ = ModelParams::Random(config_, rng);
    const TaskSpec spec{TaskKind::kModAdd, 20};
    data_.train = GenerateSet(spec, 64, 1);
    data_.eval = GenerateSet(spec, 16, 2);
    cfg_.steps = 40;
    cfg_.batch_size = 4;
    cfg_.peak_lr = 1e-2;
  }

  ModelConfig config_;
  ModelParams base_;
  TaskData data_;
  TrainConfig cfg_;
};

TEST_F(TrainerTest, RunsAreDeterministic) {
  auto p1 = MakeDominantOnlyPlan(config_, {1, ProjKind::kDown}, {4, 8}, 3);
  auto p2 = MakeDominantOnlyPlan(config_, {1, ProjKind::kDown}, {4, 8}, 3);
  const RunRecord a = RunExperiment(base_, p1, cfg_, data_);
  const RunRecord b = RunExperiment(base_, p2, cfg_, data_, 3);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_EQ(a.final_eval_loss, b.final_eval_loss);
  EXPECT_EQ(RunRecordJson(a), RunRecordJson(b));
  EXPECT_EQ(p1.adapters[0], p2.adapters[0]);
}

TEST_F(TrainerTest, RecordFields) {
  auto plan = MakeDominantOnlyPlan(config_, {0, ProjKind::kDown}, {4, 8}, 3);
  const RunRecord r = RunExperiment(base_, plan, cfg_, data_);
  EXPECT_EQ(r.loss_curve.size(), 40u);
  EXPECT_EQ(r.trainable_param_count, 4u * (16 + 32));
  EXPECT_EQ(r.mode, "dominant-only");
  ASSERT_EQ(r.targets.size(), 1u);
  EXPECT_EQ(r.targets[0], "L0.Down");
  // With B = 0 at the start, the first batch loss is the base model's loss.
  EXPECT_EQ(r.initial_train_loss, MeanLoss(base_, data_.train));
}

TEST_F(TrainerTest, FreezeIntegrityForEveryMode) {
  std::vector<PlacementPlan> plans;
  plans.push_back(MakeDominantOnlyPlan(config_, {1, ProjKind::kDown}, {4, 8}, 3));
  plans.push_back(MakeFullWeightPlan(base_, {0, ProjKind::kDown}));
  const std::vector<ProjKind> kinds = {ProjKind::kUp, ProjKind::kGate};
  const std::vector<std::size_t> layer1 = {1};
  plans.push_back(MakeKindSubsetPlan(config_, kinds, layer1, {4, 8}, 3));
  const ModelParams before = base_;
  for (auto& plan : plans) {
    const auto targets = plan.Targets();
    TrainConfig cfg = cfg_;
    cfg.steps = 10;
    RunExperiment(base_, plan, cfg, data_);
    ASSERT_TRUE(base_ == before);
    const ModelParams trained = ApplyPlan(base_, plan);
    trained.ForEachTensor([&](const std::string& name, const Matrix& m) {
      const auto id = ParseModuleName(name);
      const bool target =
          id && std::find(targets.begin(), targets.end(), *id) != targets.end();
      bool same = true;
      base_.ForEachTensor([&](const std::string& n, const Matrix& b) {
        if (n == name) same = b == m;
      });
      EXPECT_EQ(same, !target) << plan.label << " " << name;
    });
  }
}

TEST_F(TrainerTest, MissingTargetRejected) {
  auto plan = MakeDominantOnlyPlan(ModelConfig{}, {3, ProjKind::kDown}, {4, 8}, 3);
  // Shape mismatch aside, layer 3 does not exist in a 2-layer model.
  EXPECT_THROW(RunExperiment(base_, plan, cfg_, data_), std::exception);
}

TEST_F(TrainerTest, SweepProducesOneRowPerPlan) {
  std::vector<PlacementPlan> plans;
  plans.push_back(MakeDominantOnlyPlan(config_, {1, ProjKind::kDown}, {4, 8}, 3));
  plans.push_back(MakeAllPlan(config_, {4, 8}, 3));
  TrainConfig cfg = cfg_;
  cfg.steps = 5;
  const auto records = PlacementSweep(base_, plans, cfg, data_);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_GT(records[1].trainable_param_count, records[0].trainable_param_count);
  const std::string csv = ComparisonCsv(records);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "plan,trainable_params,steps,final_train_loss,final_eval_loss,seed");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("\ndominant-only(L1.Down)," + std::to_string(4 * 48) + ",5,"), std::string::npos)
      << csv;
  std::vector<PlacementPlan> one(plans.begin(), plans.begin() + 1);
  EXPECT_THROW(PlacementSweep(base_, one, cfg, data_), std::invalid_argument);
}

// Default toy model, 200 steps: the single dominant adapter learns.
TEST(TrainerLearningTest, DominantOnlyReducesLoss) {
  const ModelConfig config;
  Rng rng(5);
  const ModelParams base = ModelParams::Random(config, rng);
  const TaskSpec spec{TaskKind::kModAdd, config.vocab_size};
  const TaskData data{GenerateSet(spec, 128, 1), GenerateSet(spec, 32, 2)};
  TrainConfig cfg;
  auto plan = MakeDominantOnlyPlan(config, {0, ProjKind::kDown}, {16, 32}, 3);
  const RunRecord r = RunExperiment(base, plan, cfg, data);
  EXPECT_EQ(r.trainable_param_count, 2048u);
  EXPECT_LT(r.final_train_loss, r.initial_train_loss);
  EXPECT_LT(r.loss_curve.back(), r.loss_curve.front());
}

TEST(PretrainTest, LowersLossDeterministically) {
  ModelConfig config;
  config.n_layers = 2;
  config.d_model = 16;
  config.n_heads = 2;
  config.d_ff = 32;
  config.vocab_size = 16;
  config.max_seq_len = 12;
  const auto data = GenerateSet({TaskKind::kCopy, 16, 4}, 64, 1);
  TrainConfig cfg;
  cfg.steps = 60;
  cfg.peak_lr = 3e-3;
  const ModelParams a = PretrainBase(config, data, cfg);
  const ModelParams b = PretrainBase(config, data, cfg);
  EXPECT_TRUE(a == b);
  Rng rng(cfg.seed);
  const ModelParams init = ModelParams::Random(config, rng);
  EXPECT_LT(MeanLoss(a, data), MeanLoss(init, data));
}

}  // namespace
}  // namespace domlora
