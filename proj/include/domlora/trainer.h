// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_TRAINER_H_
#define DOMLORA_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "domlora/lora.h"
#include "domlora/model.h"
#include "domlora/optim.h"
#include "domlora/probe.h"

namespace domlora {

struct TrainConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 8;
  double peak_lr = 1e-2;
  double warmup_ratio = 0.03;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;

  // ceil(warmup_ratio * steps), clamped to [1, steps - 1].
  std::size_t warmup_steps() const;
  // Throws std::invalid_argument on steps < 2, batch_size 0, peak_lr <= 0 or
  // warmup_ratio outside (0, 1).
  void Validate() const;
};

// Linear warmup from 0 to peak over warmup_steps, then cosine decay to 0 at
// `steps`. Throws std::out_of_range for step > steps.
double LrAt(std::size_t step, const TrainConfig& cfg);

struct TaskData {
  std::vector<ProbeSample> train;
  std::vector<ProbeSample> eval;
};

struct RunRecord {
  std::string plan_label;
  std::string mode;
  std::vector<std::string> targets;
  std::size_t trainable_param_count = 0;
  std::size_t steps = 0;
  std::vector<double> loss_curve;  // mean batch loss before each update
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
  double final_eval_loss = 0.0;
  std::uint64_t seed = 0;
};

double MeanLoss(const ModelParams& params, std::span<const ProbeSample> samples,
                std::size_t workers = 1);

// Trains every tensor of a freshly initialized model (init from Rng(seed)).
ModelParams PretrainBase(const ModelConfig& config, std::span<const ProbeSample> data,
                         const TrainConfig& cfg, std::size_t workers = 1);

// Trains `plan` in place against the frozen `base`. Step k uses the batch
// train[(k * batch_size + j) % train.size()], j < batch_size, and learning
// rate LrAt(k).
RunRecord RunExperiment(const ModelParams& base, PlacementPlan& plan,
                        const TrainConfig& cfg, const TaskData& data,
                        std::size_t workers = 1);

std::vector<RunRecord> PlacementSweep(const ModelParams& base,
                                      std::vector<PlacementPlan>& plans,
                                      const TrainConfig& cfg, const TaskData& data,
                                      std::size_t workers = 1);

// Columns: plan,trainable_params,steps,final_train_loss,final_eval_loss,seed
std::string ComparisonCsv(std::span<const RunRecord> records);
std::string RunRecordJson(const RunRecord& record);

}  // namespace domlora

#endif  // DOMLORA_TRAINER_H_
