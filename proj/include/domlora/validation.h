// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_VALIDATION_H_
#define DOMLORA_VALIDATION_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "domlora/model.h"
#include "domlora/probe.h"

namespace domlora {

// Property suites behind `domlora validate`. Each check measures one error
// statistic and compares it against a fixed tolerance.
struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::optional<double> stderr_;  // Monte Carlo checks only
  std::string detail;
};

struct ValidationOptions {
  std::uint64_t seed = 0;
  std::size_t seeds = 20;  // random models for gradient oracles
  std::size_t moment_trials = 1000000;
  std::size_t page_trials = 10000;
  std::size_t page_rank = 64;
  double page_alpha = 128.0;
  double fd_step = 1e-4;
  std::size_t workers = 1;
  // Model for the PAGE agreement check (random weights, 32 copy samples).
  ModelConfig page_model;
  // Test-only fault: negate the analytic B-factor gradient.
  bool fault_flip_grad_b = false;
};

// Central difference of f along every entry of m. m is restored afterwards.
Matrix FiniteDifferenceGradient(Matrix& m, const std::function<double()>& f, double h);

// max |analytic - numeric| / max(max |numeric|, floor). Normwise relative
// error; floor guards all-zero gradients.
double RelativeError(const Matrix& analytic, const Matrix& numeric,
                     double floor = 1e-300);

// A random probe sample for `config` with at least one supervised position.
ProbeSample RandomSample(const ModelConfig& config, std::size_t length, Rng& rng);

// Analytic projection gradients vs central differences on a 2-layer,
// d_model = 8 model, every projection kind. Tolerance 1e-5.
CheckResult CheckModelGradients(const ValidationOptions& opts, std::size_t n_models);

// At initialization (B = 0) on random models and adapters: end-to-end grad A
// is zero (absolute 1e-12) and grad B = s G A^T matches finite differences
// of the full model loss (relative 1e-5).
std::vector<CheckResult> CheckInitialLoraGradients(const ValidationOptions& opts);

// General factor gradients s B^T G and s G A^T vs finite differences of the
// bilinear form <G, s B A> for random A, B. Tolerance 1e-6.
CheckResult CheckFactorGradients(const ValidationOptions& opts);

// Empirical E[A^T A] at (r = 4, d_in = 12): diagonal and off-diagonal
// entries within 5 standard errors of r / (3 d_in) and 0.
std::vector<CheckResult> CheckMoment(const ValidationOptions& opts);

// Fisher-trace identity on random gradient sets. Tolerance 1e-12 relative.
CheckResult CheckFisherTrace(const ValidationOptions& opts);

// Closed form vs trace form (1e-12 relative) and closed form vs Monte Carlo
// (4 standard errors) for every module of a 4-layer toy on 32 samples.
std::vector<CheckResult> CheckPageAgreement(const ValidationOptions& opts);

std::vector<CheckResult> RunValidation(const ValidationOptions& opts);

// One line per check: name, measured, tolerance, PASS/FAIL.
std::string FormatValidationReport(const std::vector<CheckResult>& results);

}  // namespace domlora

#endif  // DOMLORA_VALIDATION_H_
