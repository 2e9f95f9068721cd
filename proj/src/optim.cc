// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/optim.h"

#include <cmath>
#include <stdexcept>

namespace domlora {

void BeginStep(OptimizerState& state) { ++state.step; }

void ApplyUpdate(OptimizerState& state, const std::string& name, Matrix& param,
                 const Matrix& grad, double lr) {
  if (!param.SameShape(grad)) {
    throw std::invalid_argument("optimizer: gradient shape mismatch for " + name);
  }
  if (state.step == 0) throw std::logic_error("optimizer: BeginStep not called");
  const OptimizerConfig& cfg = state.config;
  if (cfg.kind == OptimizerConfig::Kind::kSgd) {
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
    return;
  }
  auto [it, inserted] = state.moments.try_emplace(name);
  MomentState& ms = it->second;
  if (inserted) {
    ms.m = Matrix(param.rows(), param.cols());
    ms.v = Matrix(param.rows(), param.cols());
  }
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    ms.m[i] = cfg.beta1 * ms.m[i] + (1.0 - cfg.beta1) * g;
    ms.v[i] = cfg.beta2 * ms.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = ms.m[i] / c1;
    const double vhat = ms.v[i] / c2;
    param[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.epsilon) + cfg.weight_decay * param[i]);
  }
}

}  // namespace domlora
