// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/page.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "domlora/parallel.h"

namespace domlora {
namespace {

std::vector<Matrix> CollectModule(std::span<const GradientSet> grads,
                                  const ModuleId& module, const char* op) {
  if (grads.empty()) {
    throw std::invalid_argument(std::string(op) + ": empty gradient list");
  }
  std::vector<Matrix> out;
  out.reserve(grads.size());
  for (const GradientSet& g : grads) {
    const auto it = g.find(module);
    if (it == g.end()) {
      throw std::invalid_argument(std::string(op) + ": no gradient for " +
                                  ModuleName(module));
    }
    if (!out.empty() && !out.front().SameShape(it->second)) {
      throw std::invalid_argument(std::string(op) + ": gradient shape mismatch");
    }
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

double PageMap::at(const ModuleId& id) const {
  const auto it = values.find(id);
  if (it == values.end()) throw std::out_of_range("PageMap: no entry for " + ModuleName(id));
  return it->second;
}

double PageMap::Total() const {
  double t = 0.0;
  for (const auto& [id, v] : values) t += v;
  return t;
}

Matrix ExpectedAtA(std::size_t rank, std::size_t d_in) {
  if (d_in == 0) throw std::invalid_argument("ExpectedAtA: d_in must be >= 1");
  Matrix m = Matrix::Identity(d_in);
  m *= static_cast<double>(rank) / (3.0 * static_cast<double>(d_in));
  return m;
}

double PageClosedForm(double sensitivity, std::size_t rank, double scale,
                      std::size_t d_in) {
  if (d_in == 0) throw std::invalid_argument("PageClosedForm: d_in must be >= 1");
  return scale * scale * static_cast<double>(rank) /
         (3.0 * static_cast<double>(d_in)) * sensitivity;
}

PageMap PageClosedFormMap(const SensitivityMap& sens, std::size_t rank, double scale,
                          const std::map<ModuleId, std::size_t>& d_in) {
  PageMap pm;
  pm.rank = rank;
  pm.scale = scale;
  pm.provenance = PageProvenance::kClosedForm;
  for (const auto& [id, din] : d_in) {
    const auto it = sens.values.find(id);
    if (it == sens.values.end()) {
      throw std::invalid_argument("PageClosedFormMap: sensitivity missing for " +
                                  ModuleName(id));
    }
    pm.values[id] = PageClosedForm(it->second, rank, scale, din);
  }
  return pm;
}

PageMap PageClosedFormMap(const SensitivityMap& sens, std::size_t rank, double scale,
                          const ModelConfig& config) {
  std::map<ModuleId, std::size_t> d_in;
  for (const auto& id : AllModules(config)) d_in[id] = ProjInDim(config, id.kind);
  return PageClosedFormMap(sens, rank, scale, d_in);
}

double PageTraceForm(std::span<const GradientSet> grads, const ModuleId& module,
                     std::size_t rank, double scale) {
  const std::vector<Matrix> gs = CollectModule(grads, module, "PageTraceForm");
  const Matrix expected = ExpectedAtA(rank, gs.front().cols());
  double total = 0.0;
  for (const Matrix& g : gs) {
    total += Trace(MatMul(MatMulTN(g, g), expected));
  }
  return scale * scale / static_cast<double>(gs.size()) * total;
}

double ProjectedEnergy(std::span<const Matrix> grads, const Matrix& a, double scale) {
  if (grads.empty()) throw std::invalid_argument("ProjectedEnergy: empty gradient list");
  double total = 0.0;
  for (const Matrix& g : grads) {
    Matrix grad_b = MatMulNT(g, a);
    grad_b *= scale;
    total += FrobeniusSq(grad_b);
  }
  return total / static_cast<double>(grads.size());
}

double ProjectedEnergyFromGram(const Matrix& gram, const Matrix& a, double scale) {
  if (gram.rows() != a.cols() || gram.cols() != a.cols()) {
    throw std::invalid_argument("ProjectedEnergyFromGram: shape mismatch");
  }
  const std::size_t d = a.cols();
  std::vector<double> ma(d);
  double total = 0.0;
  for (std::size_t q = 0; q < a.rows(); ++q) {
    const auto aq = a.row(q);
    for (std::size_t j = 0; j < d; ++j) ma[j] = Dot(gram.row(j), aq);
    total += Dot(aq, ma);
  }
  return scale * scale * total;
}

MonteCarloEstimate PageMonteCarlo(std::span<const GradientSet> grads,
                                  const ModuleId& module, std::size_t rank,
                                  double scale, std::size_t trials, const Rng& rng,
                                  std::size_t workers) {
  if (trials < 2) throw std::invalid_argument("PageMonteCarlo: trials must be >= 2");
  if (rank == 0) throw std::invalid_argument("PageMonteCarlo: rank must be >= 1");
  const std::vector<Matrix> gs = CollectModule(grads, module, "PageMonteCarlo");
  const std::size_t d_in = gs.front().cols();
  Matrix gram(d_in, d_in);
  for (const Matrix& g : gs) AddMatMulTN(gram, g, g);
  gram *= 1.0 / static_cast<double>(gs.size());

  std::vector<double> values(trials);
  ParallelFor(trials, workers, [&](std::size_t t) {
    Rng stream = rng.Split(t);
    const Matrix a = KaimingUniform(stream, rank, d_in);
    values[t] = ProjectedEnergyFromGram(gram, a, scale);
  });

  const double n = static_cast<double>(trials);
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

MomentCheck ExpectedAtACheck(std::size_t rank, std::size_t d_in, std::size_t trials,
                             const Rng& rng) {
  if (trials < 2) throw std::invalid_argument("ExpectedAtACheck: trials must be >= 2");
  Matrix sum(d_in, d_in);
  Matrix sum_sq(d_in, d_in);
  Matrix ata(d_in, d_in);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng stream = rng.Split(t);
    const Matrix a = KaimingUniform(stream, rank, d_in);
    ata.Fill(0.0);
    AddMatMulTN(ata, a, a);
    for (std::size_t i = 0; i < ata.size(); ++i) {
      sum[i] += ata[i];
      sum_sq[i] += ata[i] * ata[i];
    }
  }
  const double n = static_cast<double>(trials);
  MomentCheck check;
  check.target_diag = static_cast<double>(rank) / (3.0 * static_cast<double>(d_in));
  check.mean = Matrix(d_in, d_in);
  check.stderr_ = Matrix(d_in, d_in);
  for (std::size_t i = 0; i < d_in; ++i) {
    for (std::size_t j = 0; j < d_in; ++j) {
      const double mean = sum(i, j) / n;
      const double var = std::max(0.0, (sum_sq(i, j) - n * mean * mean) / (n - 1.0));
      const double se = std::sqrt(var / n);
      check.mean(i, j) = mean;
      check.stderr_(i, j) = se;
      const double target = i == j ? check.target_diag : 0.0;
      const double dev = std::abs(mean - target);
      check.max_abs_deviation = std::max(check.max_abs_deviation, dev);
      const double z = se > 0.0 ? dev / se : (dev > 0.0 ? INFINITY : 0.0);
      double& slot = i == j ? check.max_z_diag : check.max_z_offdiag;
      slot = std::max(slot, z);
    }
  }
  return check;
}

ModuleId SelectDominant(const PageMap& pm, std::optional<ProjKind> restrict_kind) {
  const ModuleId* best = nullptr;
  double best_value = 0.0;
  // std::map iterates layer-ascending, so strict > keeps the lowest layer.
  for (const auto& [id, v] : pm.values) {
    if (restrict_kind && id.kind != *restrict_kind) continue;
    if (best == nullptr || v > best_value) {
      best = &id;
      best_value = v;
    }
  }
  if (best == nullptr) throw std::invalid_argument("SelectDominant: no candidate modules");
  return *best;
}

Concentration ConcentrationReport(const PageMap& pm, const ModuleId& dominant) {
  const double total = pm.Total();
  if (!(total > 0.0)) throw std::invalid_argument("ConcentrationReport: zero total");
  double down_total = 0.0;
  for (const auto& [id, v] : pm.values) {
    if (id.kind == ProjKind::kDown) down_total += v;
  }
  const double dom = pm.at(dominant);
  return {dom / total, down_total > 0.0 ? dom / down_total : 0.0};
}

Concentration ConcentrationReport(const PageMap& pm) {
  if (pm.values.empty()) throw std::invalid_argument("ConcentrationReport: empty map");
  const bool has_down = std::any_of(pm.values.begin(), pm.values.end(), [](const auto& kv) {
    return kv.first.kind == ProjKind::kDown;
  });
  return ConcentrationReport(
      pm, SelectDominant(pm, has_down ? std::optional(ProjKind::kDown) : std::nullopt));
}

}  // namespace domlora
