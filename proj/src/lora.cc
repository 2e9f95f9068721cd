// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/lora.h"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace domlora {
namespace {

std::size_t FlatIndex(const ModuleId& id) {
  return id.layer * kAllKinds.size() + static_cast<std::size_t>(id.kind);
}

LoraAdapter MakeAdapter(const ModelConfig& config, const ModuleId& id,
                        const LoraSettings& lora, std::uint64_t seed) {
  if (id.layer >= config.n_layers) {
    throw std::invalid_argument("placement: layer " + std::to_string(id.layer) +
                                " out of range");
  }
  Rng rng = Rng(seed).Split(FlatIndex(id));
  return LoraAdapter::Create(id, lora.rank, lora.alpha, ProjOutDim(config, id.kind),
                             ProjInDim(config, id.kind), rng);
}

std::string JoinModules(const std::vector<ModuleId>& ids) {
  std::string s;
  for (const auto& id : ids) {
    if (!s.empty()) s += "+";
    s += ModuleName(id);
  }
  return s;
}

}  // namespace

LoraAdapter LoraAdapter::Create(const ModuleId& target, std::size_t rank, double alpha,
                                std::size_t d_out, std::size_t d_in, Rng& rng) {
  if (rank == 0) throw std::invalid_argument("LoraAdapter: rank must be >= 1");
  Matrix a = KaimingUniform(rng, rank, d_in);
  return LoraAdapter(target, alpha, std::move(a), Matrix(d_out, rank));
}

LoraAdapter::LoraAdapter(const ModuleId& target, double alpha, Matrix a, Matrix b)
    : target_(target), alpha_(alpha), a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() == 0 || a_.cols() == 0 || b_.rows() == 0) {
    throw std::invalid_argument("LoraAdapter: empty factor");
  }
  if (b_.cols() != a_.rows()) {
    throw std::invalid_argument("LoraAdapter: B columns must equal A rows (rank)");
  }
}

Matrix LoraAdapter::Delta() const { return scale() * MatMul(b_, a_); }

Matrix EffectiveWeight(const Matrix& base, const LoraAdapter& adapter) {
  if (base.rows() != adapter.d_out() || base.cols() != adapter.d_in()) {
    throw std::invalid_argument("EffectiveWeight: adapter does not match base shape");
  }
  return base + adapter.Delta();
}

FactorGradients ComputeFactorGradients(const Matrix& full_grad,
                                       const LoraAdapter& adapter) {
  if (full_grad.rows() != adapter.d_out() || full_grad.cols() != adapter.d_in()) {
    throw std::invalid_argument("ComputeFactorGradients: gradient shape mismatch");
  }
  const double s = adapter.scale();
  return {s * MatMulTN(adapter.b(), full_grad), s * MatMulNT(full_grad, adapter.a())};
}

std::string_view PlacementModeName(PlacementMode mode) {
  switch (mode) {
    case PlacementMode::kAll: return "all";
    case PlacementMode::kLayerSubset: return "layer-subset";
    case PlacementMode::kKindSubset: return "kind-subset";
    case PlacementMode::kDominantOnly: return "dominant-only";
    case PlacementMode::kFullWeightDominant: return "full-dominant";
  }
  return "?";
}

std::optional<PlacementMode> ParsePlacementMode(std::string_view name) {
  for (auto m : {PlacementMode::kAll, PlacementMode::kLayerSubset,
                 PlacementMode::kKindSubset, PlacementMode::kDominantOnly,
                 PlacementMode::kFullWeightDominant}) {
    if (PlacementModeName(m) == name) return m;
  }
  return std::nullopt;
}

std::vector<ModuleId> PlacementPlan::Targets() const {
  std::vector<ModuleId> ids;
  for (const auto& a : adapters) ids.push_back(a.target());
  if (full_weight) ids.push_back(full_weight->id);
  return ids;
}

std::size_t PlacementPlan::TrainableParamCount() const {
  std::size_t n = full_weight ? full_weight->weight.size() : 0;
  for (const auto& a : adapters) n += a.ParameterCount();
  return n;
}

void PlacementPlan::Validate() const {
  if (mode == PlacementMode::kDominantOnly && adapters.size() != 1) {
    throw std::invalid_argument("dominant-only plan must carry exactly one adapter");
  }
  if (mode == PlacementMode::kFullWeightDominant) {
    if (!adapters.empty() || !full_weight) {
      throw std::invalid_argument(
          "full-dominant plan must carry no adapters and one full-weight target");
    }
    return;
  }
  if (full_weight) throw std::invalid_argument("only full-dominant plans train full weights");
  if (adapters.empty()) throw std::invalid_argument("placement plan has no adapters");
  std::set<ModuleId> seen;
  for (const auto& a : adapters) {
    if (!seen.insert(a.target()).second) {
      throw std::invalid_argument("duplicate adapter target " + ModuleName(a.target()));
    }
  }
}

PlacementPlan MakeAllPlan(const ModelConfig& config, const LoraSettings& lora,
                          std::uint64_t seed) {
  PlacementPlan plan;
  plan.mode = PlacementMode::kAll;
  plan.label = "all";
  for (const auto& id : AllModules(config)) {
    plan.adapters.push_back(MakeAdapter(config, id, lora, seed));
  }
  return plan;
}

PlacementPlan MakeLayerSubsetPlan(const ModelConfig& config,
                                  std::span<const std::size_t> layers,
                                  const LoraSettings& lora, std::uint64_t seed) {
  PlacementPlan plan;
  plan.mode = PlacementMode::kLayerSubset;
  std::vector<ModuleId> ids;
  for (std::size_t l : layers)
    for (ProjKind k : kAllKinds) ids.push_back({l, k});
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) plan.adapters.push_back(MakeAdapter(config, id, lora, seed));
  plan.label = "layers(";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    plan.label += (i ? "," : "") + std::to_string(layers[i]);
  }
  plan.label += ")";
  plan.Validate();
  return plan;
}

PlacementPlan MakeKindSubsetPlan(const ModelConfig& config,
                                 std::span<const ProjKind> kinds,
                                 std::span<const std::size_t> layers,
                                 const LoraSettings& lora, std::uint64_t seed) {
  std::vector<std::size_t> use_layers(layers.begin(), layers.end());
  if (use_layers.empty()) {
    for (std::size_t l = 0; l < config.n_layers; ++l) use_layers.push_back(l);
  }
  std::vector<ModuleId> ids;
  for (std::size_t l : use_layers)
    for (ProjKind k : kinds) ids.push_back({l, k});
  std::sort(ids.begin(), ids.end());
  PlacementPlan plan;
  plan.mode = PlacementMode::kKindSubset;
  for (const auto& id : ids) plan.adapters.push_back(MakeAdapter(config, id, lora, seed));
  plan.label = "kinds(" + JoinModules(ids) + ")";
  plan.Validate();
  return plan;
}

PlacementPlan MakeDominantOnlyPlan(const ModelConfig& config, const ModuleId& target,
                                   const LoraSettings& lora, std::uint64_t seed) {
  PlacementPlan plan;
  plan.mode = PlacementMode::kDominantOnly;
  plan.label = "dominant-only(" + ModuleName(target) + ")";
  plan.adapters.push_back(MakeAdapter(config, target, lora, seed));
  return plan;
}

PlacementPlan MakeFullWeightPlan(const ModelParams& base, const ModuleId& target) {
  PlacementPlan plan;
  plan.mode = PlacementMode::kFullWeightDominant;
  plan.label = "full-dominant(" + ModuleName(target) + ")";
  plan.full_weight = FullWeightTarget{target, base.projection(target)};
  return plan;
}

ModelParams ApplyPlan(const ModelParams& base, const PlacementPlan& plan) {
  ModelParams eff = base;
  for (const auto& adapter : plan.adapters) {
    eff.projection(adapter.target()) =
        EffectiveWeight(base.projection(adapter.target()), adapter);
  }
  if (plan.full_weight) {
    Matrix& w = eff.projection(plan.full_weight->id);
    if (!w.SameShape(plan.full_weight->weight)) {
      throw std::invalid_argument("ApplyPlan: full-weight target shape mismatch");
    }
    w = plan.full_weight->weight;
  }
  return eff;
}

void TrainStepLora(PlacementPlan& plan, const GradientSet& grads,
                   OptimizerState& state, double lr) {
  for (const auto& id : plan.Targets()) {
    if (!grads.contains(id)) {
      throw std::invalid_argument("TrainStepLora: missing gradient for " + ModuleName(id));
    }
  }
  BeginStep(state);
  for (auto& adapter : plan.adapters) {
    const std::string name = ModuleName(adapter.target());
    // Both factor gradients are taken at the pre-step values.
    FactorGradients fg = ComputeFactorGradients(grads.at(adapter.target()), adapter);
    ApplyUpdate(state, name + ".A", adapter.mutable_a(), fg.grad_a, lr);
    ApplyUpdate(state, name + ".B", adapter.mutable_b(), fg.grad_b, lr);
  }
  if (plan.full_weight) {
    ApplyUpdate(state, ModuleName(plan.full_weight->id), plan.full_weight->weight,
                grads.at(plan.full_weight->id), lr);
  }
}

}  // namespace domlora
