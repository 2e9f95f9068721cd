// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_LORA_H_
#define DOMLORA_LORA_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "domlora/model.h"
#include "domlora/optim.h"
#include "domlora/rng.h"
#include "domlora/tensor.h"

namespace domlora {

// Low-rank update W = W0 + s * B * A with s = alpha / rank.
// A is (rank x d_in), B is (d_out x rank).
class LoraAdapter {
 public:
  // Standard initialization: B = 0, A Kaiming-uniform.
  static LoraAdapter Create(const ModuleId& target, std::size_t rank, double alpha,
                            std::size_t d_out, std::size_t d_in, Rng& rng);
  // Explicit factors, e.g. when loading a checkpoint. Validates shapes.
  LoraAdapter(const ModuleId& target, double alpha, Matrix a, Matrix b);

  const ModuleId& target() const { return target_; }
  std::size_t rank() const { return a_.rows(); }
  double alpha() const { return alpha_; }
  double scale() const { return alpha_ / static_cast<double>(rank()); }
  std::size_t d_in() const { return a_.cols(); }
  std::size_t d_out() const { return b_.rows(); }
  std::size_t ParameterCount() const { return a_.size() + b_.size(); }

  const Matrix& a() const { return a_; }
  const Matrix& b() const { return b_; }
  Matrix& mutable_a() { return a_; }
  Matrix& mutable_b() { return b_; }

  // s * B * A.
  Matrix Delta() const;

  friend bool operator==(const LoraAdapter&, const LoraAdapter&) = default;

 private:
  ModuleId target_;
  double alpha_ = 0.0;
  Matrix a_;
  Matrix b_;
};

// W0 + s * B * A. Throws std::invalid_argument on shape mismatch.
Matrix EffectiveWeight(const Matrix& base, const LoraAdapter& adapter);

struct FactorGradients {
  Matrix grad_a;  // s * B^T G
  Matrix grad_b;  // s * G A^T
};

// Chain rule from the full-weight gradient G to the factors, valid for any
// current A, B.
FactorGradients ComputeFactorGradients(const Matrix& full_grad,
                                       const LoraAdapter& adapter);

enum class PlacementMode {
  kAll,
  kLayerSubset,
  kKindSubset,
  kDominantOnly,
  kFullWeightDominant,
};

std::string_view PlacementModeName(PlacementMode mode);
std::optional<PlacementMode> ParsePlacementMode(std::string_view name);

struct FullWeightTarget {
  ModuleId id;
  Matrix weight;  // current trained value
};

// The set of modules receiving trainable updates. Everything else in the
// base model stays frozen.
struct PlacementPlan {
  PlacementMode mode = PlacementMode::kAll;
  std::string label;
  std::vector<LoraAdapter> adapters;
  std::optional<FullWeightTarget> full_weight;

  std::vector<ModuleId> Targets() const;
  std::size_t TrainableParamCount() const;
  // DominantOnly: exactly one adapter. FullWeightDominant: no adapters and
  // one full-weight target. Other modes: at least one adapter, no full
  // weight, no duplicate targets.
  void Validate() const;
};

struct LoraSettings {
  std::size_t rank = 64;
  double alpha = 128.0;
};

// Adapter A factors are drawn from Rng(seed).Split(flat module index), so a
// given module gets the same initialization in every plan built from the
// same seed.
PlacementPlan MakeAllPlan(const ModelConfig& config, const LoraSettings& lora,
                          std::uint64_t seed);
PlacementPlan MakeLayerSubsetPlan(const ModelConfig& config,
                                  std::span<const std::size_t> layers,
                                  const LoraSettings& lora, std::uint64_t seed);
// `layers` empty means every layer.
PlacementPlan MakeKindSubsetPlan(const ModelConfig& config,
                                 std::span<const ProjKind> kinds,
                                 std::span<const std::size_t> layers,
                                 const LoraSettings& lora, std::uint64_t seed);
PlacementPlan MakeDominantOnlyPlan(const ModelConfig& config, const ModuleId& target,
                                   const LoraSettings& lora, std::uint64_t seed);
PlacementPlan MakeFullWeightPlan(const ModelParams& base, const ModuleId& target);

// Effective parameters: base with every adapter merged and the full-weight
// target substituted. Non-target tensors are copied unchanged.
ModelParams ApplyPlan(const ModelParams& base, const PlacementPlan& plan);

// One optimizer step on the plan's trainable tensors. `grads` holds the
// full-weight loss gradient for every target, taken at ApplyPlan(base, plan).
// Throws std::invalid_argument if a target has no gradient.
void TrainStepLora(PlacementPlan& plan, const GradientSet& grads,
                   OptimizerState& state, double lr);

}  // namespace domlora

#endif  // DOMLORA_LORA_H_
