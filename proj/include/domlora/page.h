// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_PAGE_H_
#define DOMLORA_PAGE_H_

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>

#include "domlora/model.h"
#include "domlora/probe.h"
#include "domlora/rng.h"
#include "domlora/tensor.h"

namespace domlora {

// Projected adapter gradient energy: the expected squared Frobenius norm of
// the initial B-gradient s * G * A^T over the Kaiming-uniform draw of A,
// averaged over probe samples. With E[A^T A] = r / (3 d_in) * I this is
//
//   PAGE = s^2 * r / (3 * d_in) * S_emp.
//
// PageMap values come from one of three routes, recorded in `provenance`.
enum class PageProvenance { kClosedForm, kTraceForm, kMonteCarlo };

struct PageMap {
  std::map<ModuleId, double> values;
  std::size_t rank = 0;
  double scale = 0.0;
  PageProvenance provenance = PageProvenance::kClosedForm;
  std::size_t trials = 0;  // Monte Carlo only

  double at(const ModuleId& id) const;
  double Total() const;
};

// E[A^T A] for A (rank x d_in) with U(-1/sqrt(d_in), 1/sqrt(d_in)) entries.
Matrix ExpectedAtA(std::size_t rank, std::size_t d_in);

double PageClosedForm(double sensitivity, std::size_t rank, double scale,
                      std::size_t d_in);

// Applies the closed form to every module in `modules`. Throws
// std::invalid_argument if `sens` is missing a module or a d_in is zero.
PageMap PageClosedFormMap(const SensitivityMap& sens, std::size_t rank, double scale,
                          const std::map<ModuleId, std::size_t>& d_in);
PageMap PageClosedFormMap(const SensitivityMap& sens, std::size_t rank, double scale,
                          const ModelConfig& config);

// (s^2 / N) sum_i tr(G_i^T G_i E[A^T A]), with G_i^T G_i and E[A^T A] formed
// explicitly.
double PageTraceForm(std::span<const GradientSet> grads, const ModuleId& module,
                     std::size_t rank, double scale);

// (1/N) sum_i ||s G_i A^T||_F^2 for one fixed A, by direct products.
double ProjectedEnergy(std::span<const Matrix> grads, const Matrix& a, double scale);

// Same quantity through the sample Gram matrix M = (1/N) sum_i G_i^T G_i:
// s^2 * sum_q a_q^T M a_q, where a_q are the rows of A.
double ProjectedEnergyFromGram(const Matrix& gram, const Matrix& a, double scale);

struct MonteCarloEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
};

// Mean and standard error of ProjectedEnergy over `trials` independent draws
// of A. Trial t draws from rng.Split(t); the mean is reduced in trial order.
MonteCarloEstimate PageMonteCarlo(std::span<const GradientSet> grads,
                                  const ModuleId& module, std::size_t rank,
                                  double scale, std::size_t trials, const Rng& rng,
                                  std::size_t workers = 1);

struct MomentCheck {
  Matrix mean;      // empirical E[A^T A]
  Matrix stderr_;   // per-entry standard error
  double target_diag = 0.0;
  double max_abs_deviation = 0.0;
  // max over entries of |mean - target| / stderr
  double max_z_diag = 0.0;
  double max_z_offdiag = 0.0;
};

// Empirical mean of A^T A over `trials` draws (trial t from rng.Split(t)).
MomentCheck ExpectedAtACheck(std::size_t rank, std::size_t d_in, std::size_t trials,
                             const Rng& rng);

// Argmax of the map, optionally restricted to one kind. Ties go to the lowest
// layer index (then the earliest kind).
ModuleId SelectDominant(const PageMap& pm, std::optional<ProjKind> restrict_kind);

struct Concentration {
  double share_of_total = 0.0;
  double share_among_down = 0.0;
};

// Share of the dominant module's value in the total, and among Down modules.
// The dominant module is SelectDominant(pm, kDown) when the map has Down
// entries, else the unrestricted argmax.
Concentration ConcentrationReport(const PageMap& pm);
Concentration ConcentrationReport(const PageMap& pm, const ModuleId& dominant);

}  // namespace domlora

#endif  // DOMLORA_PAGE_H_
