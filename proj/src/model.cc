// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/model.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace domlora {
namespace {

constexpr std::array<std::string_view, 7> kKindNames = {"Q",  "K",    "V",   "O",
                                                        "Up", "Gate", "Down"};

std::string Lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// y = g * x / rms(x), row-wise. Returns 1/rms per row.
std::vector<double> RmsNormForward(const Matrix& x, const Matrix& gain, Matrix& y) {
  const std::size_t d = x.cols();
  y = Matrix(x.rows(), d);
  std::vector<double> inv_rms(x.rows());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const auto xr = x.row(t);
    const double ms = Dot(xr, xr) / static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(ms + kNormEpsilon);
    inv_rms[t] = inv;
    auto yr = y.row(t);
    for (std::size_t j = 0; j < d; ++j) yr[j] = gain[j] * xr[j] * inv;
  }
  return inv_rms;
}

// Accumulates into dgain; returns dx.
Matrix RmsNormBackward(const Matrix& x, const Matrix& gain,
                       const std::vector<double>& inv_rms, const Matrix& dy,
                       Matrix& dgain) {
  const std::size_t d = x.cols();
  Matrix dx(x.rows(), d);
  std::vector<double> dxhat(d);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const auto xr = x.row(t);
    const auto dyr = dy.row(t);
    const double inv = inv_rms[t];
    double proj = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = xr[j] * inv;
      dgain[j] += dyr[j] * xhat;
      dxhat[j] = dyr[j] * gain[j];
      proj += dxhat[j] * xhat;
    }
    proj /= static_cast<double>(d);
    auto dxr = dx.row(t);
    for (std::size_t j = 0; j < d; ++j) dxr[j] = inv * (dxhat[j] - xr[j] * inv * proj);
  }
  return dx;
}

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void CheckTokens(const ModelConfig& config, std::span<const Token> tokens) {
  if (tokens.empty()) throw std::invalid_argument("Forward: empty token sequence");
  if (tokens.size() > config.max_seq_len) {
    throw std::invalid_argument("Forward: sequence length " +
                                std::to_string(tokens.size()) + " exceeds max_seq_len " +
                                std::to_string(config.max_seq_len));
  }
  for (Token t : tokens) {
    if (t >= config.vocab_size) {
      throw std::invalid_argument("Forward: token id " + std::to_string(t) +
                                  " out of range for vocab " +
                                  std::to_string(config.vocab_size));
    }
  }
}

}  // namespace

void ModelConfig::Validate() const {
  if (n_layers == 0 || d_model == 0 || n_heads == 0 || d_ff == 0 ||
      vocab_size == 0 || max_seq_len == 0) {
    throw std::invalid_argument("ModelConfig: all dimensions must be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
  }
}

std::string_view KindName(ProjKind kind) {
  return kKindNames[static_cast<std::size_t>(kind)];
}

std::optional<ProjKind> ParseKind(std::string_view name) {
  const std::string lower = Lower(name);
  for (ProjKind k : kAllKinds) {
    if (Lower(KindName(k)) == lower) return k;
  }
  return std::nullopt;
}

bool IsAttention(ProjKind kind) {
  return kind == ProjKind::kQ || kind == ProjKind::kK || kind == ProjKind::kV ||
         kind == ProjKind::kO;
}

std::string ModuleName(const ModuleId& id) {
  return "L" + std::to_string(id.layer) + "." + std::string(KindName(id.kind));
}

std::optional<ModuleId> ParseModuleName(std::string_view name) {
  if (name.size() < 4 || name[0] != 'L') return std::nullopt;
  const auto dot = name.find('.');
  if (dot == std::string_view::npos || dot == 1) return std::nullopt;
  std::size_t layer = 0;
  for (std::size_t i = 1; i < dot; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(name[i]))) return std::nullopt;
    layer = layer * 10 + static_cast<std::size_t>(name[i] - '0');
  }
  const auto kind = ParseKind(name.substr(dot + 1));
  if (!kind) return std::nullopt;
  return ModuleId{layer, *kind};
}

std::vector<ModuleId> AllModules(const ModelConfig& config) {
  std::vector<ModuleId> ids;
  ids.reserve(config.n_layers * kAllKinds.size());
  for (std::size_t l = 0; l < config.n_layers; ++l)
    for (ProjKind k : kAllKinds) ids.push_back({l, k});
  return ids;
}

std::size_t ProjInDim(const ModelConfig& config, ProjKind kind) {
  return kind == ProjKind::kDown ? config.d_ff : config.d_model;
}

std::size_t ProjOutDim(const ModelConfig& config, ProjKind kind) {
  return (kind == ProjKind::kUp || kind == ProjKind::kGate) ? config.d_ff
                                                             : config.d_model;
}

ModelParams ModelParams::Zeros(const ModelConfig& config) {
  config.Validate();
  const std::size_t d = config.d_model;
  const std::size_t f = config.d_ff;
  ModelParams p;
  p.config = config;
  p.tok_emb = Matrix(config.vocab_size, d);
  p.pos_emb = Matrix(config.max_seq_len, d);
  p.layers.resize(config.n_layers);
  for (auto& layer : p.layers) {
    layer.attn_norm = Matrix(1, d);
    layer.q = Matrix(d, d);
    layer.k = Matrix(d, d);
    layer.v = Matrix(d, d);
    layer.o = Matrix(d, d);
    layer.ffn_norm = Matrix(1, d);
    layer.up = Matrix(f, d);
    layer.gate = Matrix(f, d);
    layer.down = Matrix(d, f);
  }
  p.final_norm = Matrix(1, d);
  p.unembed = Matrix(config.vocab_size, d);
  return p;
}

ModelParams ModelParams::Random(const ModelConfig& config, Rng& rng) {
  ModelParams p = Zeros(config);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  p.tok_emb = UniformMatrix(rng, config.vocab_size, config.d_model, 1.0);
  p.pos_emb = UniformMatrix(rng, config.max_seq_len, config.d_model, 0.5);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    auto& layer = p.layers[l];
    layer.attn_norm.Fill(1.0);
    layer.ffn_norm.Fill(1.0);
    for (ProjKind k : kAllKinds) {
      Matrix& w = p.projection({l, k});
      w = KaimingUniform(rng, w.rows(), w.cols());
    }
  }
  p.final_norm.Fill(1.0);
  p.unembed = UniformMatrix(rng, config.vocab_size, config.d_model, inv_sqrt_d);
  return p;
}

Matrix& ModelParams::projection(const ModuleId& id) {
  return const_cast<Matrix&>(std::as_const(*this).projection(id));
}

const Matrix& ModelParams::projection(const ModuleId& id) const {
  if (id.layer >= layers.size()) {
    throw std::out_of_range("projection: layer " + std::to_string(id.layer) +
                            " out of range");
  }
  const LayerParams& l = layers[id.layer];
  switch (id.kind) {
    case ProjKind::kQ: return l.q;
    case ProjKind::kK: return l.k;
    case ProjKind::kV: return l.v;
    case ProjKind::kO: return l.o;
    case ProjKind::kUp: return l.up;
    case ProjKind::kGate: return l.gate;
    case ProjKind::kDown: return l.down;
  }
  throw std::logic_error("projection: bad kind");
}

void ModelParams::ForEachTensor(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  fn("tok_emb", tok_emb);
  fn("pos_emb", pos_emb);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "L" + std::to_string(l) + ".";
    fn(prefix + "attn_norm", layers[l].attn_norm);
    fn(prefix + "ffn_norm", layers[l].ffn_norm);
    for (ProjKind k : kAllKinds) fn(ModuleName({l, k}), projection({l, k}));
  }
  fn("final_norm", final_norm);
  fn("unembed", unembed);
}

void ModelParams::ForEachTensor(
    const std::function<void(const std::string&, Matrix&)>& fn) {
  std::as_const(*this).ForEachTensor(
      [&](const std::string& name, const Matrix& m) { fn(name, const_cast<Matrix&>(m)); });
}

std::size_t ModelParams::ParameterCount() const {
  std::size_t n = 0;
  ForEachTensor([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!(a.config == b.config)) return false;
  std::vector<const Matrix*> left;
  a.ForEachTensor([&](const std::string&, const Matrix& m) { left.push_back(&m); });
  std::size_t i = 0;
  bool equal = true;
  b.ForEachTensor([&](const std::string&, const Matrix& m) {
    equal = equal && i < left.size() && *left[i] == m;
    ++i;
  });
  return equal && i == left.size();
}

ForwardResult Forward(const ModelParams& params, std::span<const Token> tokens) {
  const ModelConfig& cfg = params.config;
  CheckTokens(cfg, tokens);
  const std::size_t T = tokens.size();
  const std::size_t d = cfg.d_model;
  const std::size_t H = cfg.n_heads;
  const std::size_t dh = cfg.head_dim();
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.config = cfg;
  cache.tokens.assign(tokens.begin(), tokens.end());
  cache.layers.resize(cfg.n_layers);

  Matrix x(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    const auto te = params.tok_emb.row(tokens[t]);
    const auto pe = params.pos_emb.row(t);
    auto xr = x.row(t);
    for (std::size_t j = 0; j < d; ++j) xr[j] = te[j] + pe[j];
  }

  std::vector<double> scores(T);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerParams& w = params.layers[l];
    LayerCache& c = cache.layers[l];
    c.x_in = x;
    c.inv_rms1 = RmsNormForward(x, w.attn_norm, c.n1);
    c.q = MatMulNT(c.n1, w.q);
    c.k = MatMulNT(c.n1, w.k);
    c.v = MatMulNT(c.n1, w.v);
    c.ctx = Matrix(T, d);
    c.probs.assign(H, Matrix(T, T));
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = h * dh;
      Matrix& P = c.probs[h];
      for (std::size_t i = 0; i < T; ++i) {
        const double* qi = c.q.row(i).data() + off;
        double max_score = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          const double* kj = c.k.row(j).data() + off;
          double s = 0.0;
          for (std::size_t e = 0; e < dh; ++e) s += qi[e] * kj[e];
          scores[j] = s * attn_scale;
          max_score = std::max(max_score, scores[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          scores[j] = std::exp(scores[j] - max_score);
          denom += scores[j];
        }
        double* ci = c.ctx.row(i).data() + off;
        for (std::size_t j = 0; j <= i; ++j) {
          const double pij = scores[j] / denom;
          P(i, j) = pij;
          const double* vj = c.v.row(j).data() + off;
          for (std::size_t e = 0; e < dh; ++e) ci[e] += pij * vj[e];
        }
      }
    }
    c.h1 = x + MatMulNT(c.ctx, w.o);
    c.inv_rms2 = RmsNormForward(c.h1, w.ffn_norm, c.n2);
    c.up = MatMulNT(c.n2, w.up);
    c.gate = MatMulNT(c.n2, w.gate);
    c.act = Matrix(T, cfg.d_ff);
    for (std::size_t i = 0; i < c.act.size(); ++i) {
      const double g = c.gate[i];
      c.act[i] = g * Sigmoid(g) * c.up[i];
    }
    x = c.h1 + MatMulNT(c.act, w.down);
  }
  cache.h_final = x;
  cache.inv_rms_final = RmsNormForward(x, params.final_norm, cache.n_final);
  result.logits = MatMulNT(cache.n_final, params.unembed);
  return result;
}

Matrix Logits(const ModelParams& params, std::span<const Token> tokens) {
  return Forward(params, tokens).logits;
}

ModelParams BackwardAll(const ModelParams& params, const ForwardCache& cache,
                        const Matrix& logit_grad) {
  const ModelConfig& cfg = params.config;
  if (!(cache.config == cfg) || cache.layers.size() != params.layers.size()) {
    throw std::invalid_argument("Backward: cache was produced by a different model");
  }
  const std::size_t T = cache.tokens.size();
  if (logit_grad.rows() != T || logit_grad.cols() != cfg.vocab_size) {
    throw std::invalid_argument("Backward: logit gradient shape mismatch");
  }
  const std::size_t H = cfg.n_heads;
  const std::size_t dh = cfg.head_dim();
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  ModelParams grad = ModelParams::Zeros(cfg);
  AddMatMulTN(grad.unembed, logit_grad, cache.n_final);
  Matrix dn = MatMul(logit_grad, params.unembed);
  Matrix dx = RmsNormBackward(cache.h_final, params.final_norm, cache.inv_rms_final,
                              dn, grad.final_norm);

  for (std::size_t l = cfg.n_layers; l-- > 0;) {
    const LayerParams& w = params.layers[l];
    const LayerCache& c = cache.layers[l];
    LayerParams& g = grad.layers[l];

    // FFN: x_out = h1 + act W_down^T
    AddMatMulTN(g.down, dx, c.act);
    Matrix dact = MatMul(dx, w.down);
    Matrix dup(T, cfg.d_ff);
    Matrix dgate(T, cfg.d_ff);
    for (std::size_t i = 0; i < dact.size(); ++i) {
      const double gv = c.gate[i];
      const double sig = Sigmoid(gv);
      dup[i] = dact[i] * gv * sig;
      dgate[i] = dact[i] * c.up[i] * sig * (1.0 + gv * (1.0 - sig));
    }
    AddMatMulTN(g.up, dup, c.n2);
    AddMatMulTN(g.gate, dgate, c.n2);
    Matrix dn2 = MatMul(dup, w.up);
    dn2 += MatMul(dgate, w.gate);
    Matrix dh1 = dx;
    dh1 += RmsNormBackward(c.h1, w.ffn_norm, c.inv_rms2, dn2, g.ffn_norm);

    // Attention: h1 = x_in + ctx W_o^T
    AddMatMulTN(g.o, dh1, c.ctx);
    Matrix dctx = MatMul(dh1, w.o);
    Matrix dq(T, cfg.d_model);
    Matrix dk(T, cfg.d_model);
    Matrix dv(T, cfg.d_model);
    std::vector<double> dp(T);
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = h * dh;
      const Matrix& P = c.probs[h];
      for (std::size_t i = 0; i < T; ++i) {
        const double* dci = dctx.row(i).data() + off;
        double weighted = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* vj = c.v.row(j).data() + off;
          double* dvj = dv.row(j).data() + off;
          double s = 0.0;
          for (std::size_t e = 0; e < dh; ++e) {
            s += dci[e] * vj[e];
            dvj[e] += P(i, j) * dci[e];
          }
          dp[j] = s;
          weighted += P(i, j) * s;
        }
        const double* qi = c.q.row(i).data() + off;
        double* dqi = dq.row(i).data() + off;
        for (std::size_t j = 0; j <= i; ++j) {
          const double ds = P(i, j) * (dp[j] - weighted) * attn_scale;
          if (ds == 0.0) continue;
          const double* kj = c.k.row(j).data() + off;
          double* dkj = dk.row(j).data() + off;
          for (std::size_t e = 0; e < dh; ++e) {
            dqi[e] += ds * kj[e];
            dkj[e] += ds * qi[e];
          }
        }
      }
    }
    AddMatMulTN(g.q, dq, c.n1);
    AddMatMulTN(g.k, dk, c.n1);
    AddMatMulTN(g.v, dv, c.n1);
    Matrix dn1 = MatMul(dq, w.q);
    dn1 += MatMul(dk, w.k);
    dn1 += MatMul(dv, w.v);
    dx = dh1;
    dx += RmsNormBackward(c.x_in, w.attn_norm, c.inv_rms1, dn1, g.attn_norm);
  }

  for (std::size_t t = 0; t < T; ++t) {
    auto te = grad.tok_emb.row(cache.tokens[t]);
    auto pe = grad.pos_emb.row(t);
    const auto dr = dx.row(t);
    for (std::size_t j = 0; j < cfg.d_model; ++j) {
      te[j] += dr[j];
      pe[j] += dr[j];
    }
  }
  return grad;
}

GradientSet BackwardProjectionGrads(const ModelParams& params,
                                    const ForwardCache& cache,
                                    const Matrix& logit_grad,
                                    std::span<const ModuleId> wanted) {
  ModelParams all = BackwardAll(params, cache, logit_grad);
  GradientSet out;
  for (const ModuleId& id : wanted) {
    if (!out.contains(id)) out.emplace(id, std::move(all.projection(id)));
  }
  return out;
}

}  // namespace domlora
