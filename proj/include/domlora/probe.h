// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_PROBE_H_
#define DOMLORA_PROBE_H_

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "domlora/model.h"
#include "domlora/tensor.h"

namespace domlora {

// A token sequence with the positions whose tokens are supervised. Position t
// is predicted from the logits at t - 1, so position 0 can never be
// supervised.
struct ProbeSample {
  std::vector<Token> tokens;
  std::vector<bool> response_mask;

  std::size_t num_supervised() const;
  // Throws std::invalid_argument: length mismatch, empty mask, mask on
  // position 0.
  void Validate() const;
  friend bool operator==(const ProbeSample&, const ProbeSample&) = default;
};

struct SensitivityMap {
  std::map<ModuleId, double> values;
  std::size_t num_samples = 0;

  double at(const ModuleId& id) const;
};

// Mean cross-entropy over supervised positions, from precomputed logits.
// When `logit_grad` is non-null it receives dLoss/dLogits.
double MaskedCrossEntropy(const Matrix& logits, const ProbeSample& sample,
                          Matrix* logit_grad = nullptr);

// Throws std::invalid_argument for an invalid sample or one longer than
// max_seq_len (samples are never truncated).
double ProbeLoss(const ModelParams& params, const ProbeSample& sample);

// Gradient of ProbeLoss with respect to each projection in `modules` (all
// 7 x n_layers candidates when empty).
GradientSet SampleGradient(const ModelParams& params, const ProbeSample& sample,
                           std::span<const ModuleId> modules = {});

// Per-sample gradients for a probe set. `workers` > 1 runs samples on
// separate threads; results are returned in sample order either way.
std::vector<GradientSet> SampleGradients(const ModelParams& params,
                                         std::span<const ProbeSample> probe_set,
                                         std::size_t workers = 1);

// (1/N) sum_i ||G_i||_F^2 per module, summed in sample-index order.
SensitivityMap SensitivityFromGradients(std::span<const GradientSet> gradients);

SensitivityMap ModuleSensitivity(const ModelParams& params,
                                 std::span<const ProbeSample> probe_set,
                                 std::size_t workers = 1);

struct FisherTraceResult {
  double trace = 0.0;        // tr((1/N) sum vec(G) vec(G)^T)
  double sensitivity = 0.0;  // (1/N) sum ||G||_F^2
};

// Evaluates the empirical Fisher block trace by first forming its diagonal
// (1/N) sum_i vec(G_i)_j^2, then summing; returns it beside the sensitivity.
FisherTraceResult FisherTraceCheck(std::span<const GradientSet> gradients,
                                   const ModuleId& module);

// Probe-set files: one JSON object per line,
//   {"tokens": [3, 17, ...], "mask": [0, 0, 1, ...]}
std::vector<ProbeSample> LoadProbeSet(const std::filesystem::path& path);
void SaveProbeSet(const std::filesystem::path& path,
                  std::span<const ProbeSample> samples);

}  // namespace domlora

#endif  // DOMLORA_PROBE_H_
