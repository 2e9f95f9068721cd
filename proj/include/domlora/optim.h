// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_OPTIM_H_
#define DOMLORA_OPTIM_H_

#include <cstddef>
#include <map>
#include <string>

#include "domlora/tensor.h"

namespace domlora {

// AdamW with bias correction:
//   m <- b1 m + (1 - b1) g
//   v <- b2 v + (1 - b2) g^2
//   w <- w - lr * (m / (1 - b1^t) / (sqrt(v / (1 - b2^t)) + eps) + wd * w)
// Sgd is w <- w - lr * g.
struct OptimizerConfig {
  enum class Kind { kSgd, kAdamW };
  Kind kind = Kind::kAdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct MomentState {
  Matrix m;
  Matrix v;
};

struct OptimizerState {
  OptimizerConfig config;
  std::size_t step = 0;  // number of completed steps
  std::map<std::string, MomentState> moments;
};

// Applies one update to `param` under the slot `name`. Call BeginStep once
// per optimizer step before any ApplyUpdate.
void BeginStep(OptimizerState& state);
void ApplyUpdate(OptimizerState& state, const std::string& name, Matrix& param,
                 const Matrix& grad, double lr);

}  // namespace domlora

#endif  // DOMLORA_OPTIM_H_
