// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_MODEL_H_
#define DOMLORA_MODEL_H_

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "domlora/rng.h"
#include "domlora/tensor.h"

namespace domlora {

using Token = std::uint32_t;

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t d_ff = 96;
  std::size_t vocab_size = 64;
  std::size_t max_seq_len = 32;

  std::size_t head_dim() const { return d_model / n_heads; }
  // Throws std::invalid_argument on a zero field or d_model % n_heads != 0.
  void Validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class ProjKind : std::uint8_t { kQ, kK, kV, kO, kUp, kGate, kDown };

inline constexpr std::array<ProjKind, 7> kAllKinds = {
    ProjKind::kQ,  ProjKind::kK,    ProjKind::kV,   ProjKind::kO,
    ProjKind::kUp, ProjKind::kGate, ProjKind::kDown};

std::string_view KindName(ProjKind kind);
// Case-insensitive; accepts "q", "Down", "gate", ...
std::optional<ProjKind> ParseKind(std::string_view name);
bool IsAttention(ProjKind kind);

// One candidate adapter site: (layer, projection kind).
struct ModuleId {
  std::size_t layer = 0;
  ProjKind kind = ProjKind::kQ;

  auto operator<=>(const ModuleId&) const = default;
};

// "L{layer}.{kind}", e.g. "L2.Down".
std::string ModuleName(const ModuleId& id);
std::optional<ModuleId> ParseModuleName(std::string_view name);

// Every (layer, kind) pair in layer-major, kind-minor order.
std::vector<ModuleId> AllModules(const ModelConfig& config);

std::size_t ProjInDim(const ModelConfig& config, ProjKind kind);
std::size_t ProjOutDim(const ModelConfig& config, ProjKind kind);

struct LayerParams {
  Matrix attn_norm;  // 1 x d_model
  Matrix q, k, v, o;  // d_model x d_model
  Matrix ffn_norm;   // 1 x d_model
  Matrix up, gate;   // d_ff x d_model
  Matrix down;       // d_model x d_ff
};

// Weights are stored (d_out x d_in); a projection maps x -> W x.
struct ModelParams {
  ModelConfig config;
  Matrix tok_emb;     // vocab x d_model
  Matrix pos_emb;     // max_seq_len x d_model
  std::vector<LayerParams> layers;
  Matrix final_norm;  // 1 x d_model
  Matrix unembed;     // vocab x d_model

  static ModelParams Zeros(const ModelConfig& config);
  static ModelParams Random(const ModelConfig& config, Rng& rng);

  Matrix& projection(const ModuleId& id);
  const Matrix& projection(const ModuleId& id) const;

  // Visits every tensor with its checkpoint name, in a fixed order.
  void ForEachTensor(const std::function<void(const std::string&, Matrix&)>& fn);
  void ForEachTensor(
      const std::function<void(const std::string&, const Matrix&)>& fn) const;

  std::size_t ParameterCount() const;
  friend bool operator==(const ModelParams&, const ModelParams&);
};

using GradientSet = std::map<ModuleId, Matrix>;

struct LayerCache {
  Matrix x_in;          // T x d
  std::vector<double> inv_rms1;
  Matrix n1;            // normalized attention input
  Matrix q, k, v;       // T x d
  std::vector<Matrix> probs;  // per head, T x T (row-stochastic, causal)
  Matrix ctx;           // T x d, heads concatenated
  Matrix h1;            // residual after attention
  std::vector<double> inv_rms2;
  Matrix n2;
  Matrix up, gate;      // T x d_ff pre-activation
  Matrix act;           // silu(gate) * up
};

struct ForwardCache {
  ModelConfig config;
  std::vector<Token> tokens;
  std::vector<LayerCache> layers;
  Matrix h_final;
  std::vector<double> inv_rms_final;
  Matrix n_final;
};

struct ForwardResult {
  Matrix logits;  // T x vocab
  ForwardCache cache;
};

inline constexpr double kNormEpsilon = 1e-6;

// Throws std::invalid_argument on an empty or over-length sequence, or an
// out-of-range token id.
ForwardResult Forward(const ModelParams& params, std::span<const Token> tokens);
Matrix Logits(const ModelParams& params, std::span<const Token> tokens);

// Gradient of a scalar loss with respect to every parameter tensor, given
// dLoss/dLogits. Returned in ModelParams layout.
ModelParams BackwardAll(const ModelParams& params, const ForwardCache& cache,
                        const Matrix& logit_grad);

// Projection-weight gradients for the requested modules only.
GradientSet BackwardProjectionGrads(const ModelParams& params,
                                    const ForwardCache& cache,
                                    const Matrix& logit_grad,
                                    std::span<const ModuleId> wanted);

}  // namespace domlora

#endif  // DOMLORA_MODEL_H_
