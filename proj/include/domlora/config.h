// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_CONFIG_H_
#define DOMLORA_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "domlora/lora.h"
#include "domlora/model.h"
#include "domlora/tasks.h"
#include "domlora/trainer.h"

namespace domlora {

// Carries every validation message found in one pass, one per line.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> messages);
  const std::vector<std::string>& messages() const { return messages_; }

 private:
  std::vector<std::string> messages_;
};

// Run configuration. Text form is INI-style:
//
//   # comment
//   [section]
//   key = value
//
// Unknown sections or keys are errors. See docs/CONFIG.md for every key.
struct RunConfig {
  // [run]
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool deterministic = true;

  // [model]
  ModelConfig model;
  std::string checkpoint;  // empty: build from `init`
  std::string init = "pretrained";  // pretrained | random
  std::string pretrain_task = "copy";
  std::size_t pretrain_steps = 300;
  std::size_t pretrain_batch = 8;
  double pretrain_lr = 3e-3;
  std::size_t pretrain_samples = 512;
  std::size_t copy_length = 6;

  // [probe]
  std::string probe_set;  // empty: synthesize
  std::string probe_task = "copy";
  std::size_t probe_samples = 32;

  // [lora]
  std::size_t rank = 64;
  std::optional<double> alpha;  // default 2 * rank

  // [page]
  std::optional<ProjKind> restrict_kind = ProjKind::kDown;
  std::size_t page_trials = 10000;
  bool monte_carlo = false;  // add Monte Carlo column to probe reports

  // [train]
  std::string train_task = "mod-add";
  std::string mode = "dominant-only";
  std::vector<std::size_t> layers;
  std::vector<ProjKind> kinds;
  std::size_t steps = 200;
  std::size_t batch_size = 8;
  double peak_lr = 1e-2;
  double warmup_ratio = 0.03;
  std::string optimizer = "adamw";
  std::size_t train_samples = 256;
  std::size_t eval_samples = 64;

  // [sweep]
  std::vector<std::string> plans = {"ablation", "all"};
  std::vector<std::size_t> ranks = {16, 32, 64};

  // [validate]
  std::size_t validate_seeds = 20;
  std::size_t moment_trials = 1000000;
  std::size_t validate_page_trials = 10000;
  double fd_step = 1e-4;

  // [data]  (gen-data)
  std::string data_task = "copy";
  std::size_t data_count = 32;

  double lora_alpha() const { return alpha ? *alpha : 2.0 * static_cast<double>(rank); }
  LoraSettings lora() const { return {rank, lora_alpha()}; }
  TrainConfig train_config() const;
  TrainConfig pretrain_config() const;
  TaskSpec task_spec(const std::string& task_name) const;

  // Cross-field checks. Throws ConfigError.
  void Validate() const;

  // Throws ConfigError listing every problem, each prefixed "source:line:".
  static RunConfig Parse(const std::string& text, const std::string& source);
  static RunConfig Load(const std::string& path);

  // Canonical text with every key; Parse(ToText()) reproduces the config.
  std::string ToText() const;
};

}  // namespace domlora

#endif  // DOMLORA_CONFIG_H_
