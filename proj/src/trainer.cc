// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/trainer.h"

#include <cmath>
#include <algorithm>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "domlora/format.h"
#include "domlora/parallel.h"

namespace domlora {
namespace {

struct BatchResult {
  double loss = 0.0;
  GradientSet grads;
};

BatchResult BatchGradients(const ModelParams& eff, const TaskData& data,
                           std::size_t step, std::size_t batch_size,
                           std::span<const ModuleId> targets, std::size_t workers) {
  std::vector<double> losses(batch_size);
  std::vector<GradientSet> grads(batch_size);
  ParallelFor(batch_size, workers, [&](std::size_t j) {
    const ProbeSample& s = data.train[(step * batch_size + j) % data.train.size()];
    ForwardResult fwd = Forward(eff, s.tokens);
    Matrix dlogits;
    losses[j] = MaskedCrossEntropy(fwd.logits, s, &dlogits);
    grads[j] = BackwardProjectionGrads(eff, fwd.cache, dlogits, targets);
  });
  BatchResult out;
  const double inv = 1.0 / static_cast<double>(batch_size);
  for (std::size_t j = 0; j < batch_size; ++j) {
    out.loss += losses[j];
    for (auto& [id, g] : grads[j]) {
      auto [it, inserted] = out.grads.try_emplace(id, std::move(g));
      if (!inserted) it->second += g;
    }
  }
  out.loss *= inv;
  for (auto& [id, g] : out.grads) g *= inv;
  return out;
}

}  // namespace

std::size_t TrainConfig::warmup_steps() const {
  const double raw = std::ceil(warmup_ratio * static_cast<double>(steps) - 1e-9);
  const auto w = static_cast<std::size_t>(std::max(raw, 1.0));
  return std::min(w, steps - 1);
}

void TrainConfig::Validate() const {
  if (steps < 2) throw std::invalid_argument("train: steps must be >= 2");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(peak_lr > 0.0)) throw std::invalid_argument("train: peak_lr must be > 0");
  if (!(warmup_ratio > 0.0 && warmup_ratio < 1.0)) {
    throw std::invalid_argument("train: warmup_ratio must lie in (0, 1)");
  }
}

double LrAt(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.steps) {
    throw std::out_of_range("LrAt: step " + std::to_string(step) + " beyond " +
                            std::to_string(cfg.steps));
  }
  const std::size_t w = cfg.warmup_steps();
  if (step <= w) {
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(w);
  }
  const double progress =
      static_cast<double>(step - w) / static_cast<double>(cfg.steps - w);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double MeanLoss(const ModelParams& params, std::span<const ProbeSample> samples,
                std::size_t workers) {
  if (samples.empty()) throw std::invalid_argument("MeanLoss: no samples");
  std::vector<double> losses(samples.size());
  ParallelFor(samples.size(), workers,
              [&](std::size_t i) { losses[i] = ProbeLoss(params, samples[i]); });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(samples.size());
}

ModelParams PretrainBase(const ModelConfig& config, std::span<const ProbeSample> data,
                         const TrainConfig& cfg, std::size_t workers) {
  cfg.Validate();
  if (data.empty()) throw std::invalid_argument("PretrainBase: no data");
  Rng rng(cfg.seed);
  ModelParams params = ModelParams::Random(config, rng);
  OptimizerState opt{cfg.optimizer, 0, {}};
  const std::size_t B = cfg.batch_size;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<ModelParams> grads(B);
    ParallelFor(B, workers, [&](std::size_t j) {
      const ProbeSample& s = data[(step * B + j) % data.size()];
      ForwardResult fwd = Forward(params, s.tokens);
      Matrix dlogits;
      MaskedCrossEntropy(fwd.logits, s, &dlogits);
      grads[j] = BackwardAll(params, fwd.cache, dlogits);
    });
    ModelParams total = std::move(grads[0]);
    std::vector<Matrix*> acc;
    total.ForEachTensor([&](const std::string&, Matrix& m) { acc.push_back(&m); });
    for (std::size_t j = 1; j < B; ++j) {
      std::size_t i = 0;
      grads[j].ForEachTensor([&](const std::string&, Matrix& m) { *acc[i++] += m; });
    }
    const double lr = LrAt(step, cfg);
    BeginStep(opt);
    std::size_t i = 0;
    params.ForEachTensor([&](const std::string& name, Matrix& p) {
      Matrix& g = *acc[i++];
      g *= 1.0 / static_cast<double>(B);
      ApplyUpdate(opt, name, p, g, lr);
    });
  }
  return params;
}

RunRecord RunExperiment(const ModelParams& base, PlacementPlan& plan,
                        const TrainConfig& cfg, const TaskData& data,
                        std::size_t workers) {
  cfg.Validate();
  plan.Validate();
  if (data.train.empty() || data.eval.empty()) {
    throw std::invalid_argument("RunExperiment: train and eval sets must be non-empty");
  }
  const std::vector<ModuleId> targets = plan.Targets();
  for (const auto& id : targets) {
    if (id.layer >= base.config.n_layers) {
      throw std::invalid_argument("RunExperiment: target " + ModuleName(id) +
                                  " not in model");
    }
  }
  RunRecord rec;
  rec.plan_label = plan.label;
  rec.mode = std::string(PlacementModeName(plan.mode));
  for (const auto& id : targets) rec.targets.push_back(ModuleName(id));
  rec.trainable_param_count = plan.TrainableParamCount();
  rec.steps = cfg.steps;
  rec.seed = cfg.seed;
  rec.initial_train_loss = MeanLoss(ApplyPlan(base, plan), data.train, workers);

  OptimizerState opt{cfg.optimizer, 0, {}};
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const ModelParams eff = ApplyPlan(base, plan);
    BatchResult batch =
        BatchGradients(eff, data, step, cfg.batch_size, targets, workers);
    rec.loss_curve.push_back(batch.loss);
    TrainStepLora(plan, batch.grads, opt, LrAt(step, cfg));
  }
  const ModelParams trained = ApplyPlan(base, plan);
  rec.final_train_loss = MeanLoss(trained, data.train, workers);
  rec.final_eval_loss = MeanLoss(trained, data.eval, workers);
  return rec;
}

std::vector<RunRecord> PlacementSweep(const ModelParams& base,
                                      std::vector<PlacementPlan>& plans,
                                      const TrainConfig& cfg, const TaskData& data,
                                      std::size_t workers) {
  if (plans.size() < 2) throw std::invalid_argument("PlacementSweep: need >= 2 plans");
  std::vector<RunRecord> records;
  for (auto& plan : plans) records.push_back(RunExperiment(base, plan, cfg, data, workers));
  return records;
}

std::string ComparisonCsv(std::span<const RunRecord> records) {
  std::ostringstream out;
  out << "plan,trainable_params,steps,final_train_loss,final_eval_loss,seed\n";
  for (const auto& r : records) {
    out << CsvField(r.plan_label) << ',' << r.trainable_param_count << ',' << r.steps
        << ',' << FormatDouble(r.final_train_loss) << ','
        << FormatDouble(r.final_eval_loss) << ',' << r.seed << '\n';
  }
  return out.str();
}

std::string RunRecordJson(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["plan"] = r.plan_label;
  j["mode"] = r.mode;
  j["targets"] = r.targets;
  j["trainable_param_count"] = r.trainable_param_count;
  j["steps"] = r.steps;
  j["seed"] = r.seed;
  j["initial_train_loss"] = r.initial_train_loss;
  j["final_train_loss"] = r.final_train_loss;
  j["final_eval_loss"] = r.final_eval_loss;
  j["loss_curve"] = r.loss_curve;
  return j.dump(2) + "\n";
}

}  // namespace domlora
