// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/validation.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "domlora/format.h"
#include "domlora/lora.h"
#include "domlora/page.h"
#include "domlora/tasks.h"

namespace domlora {
namespace {

CheckResult Make(std::string name, double measured, double tolerance,
                 std::string detail = {}) {
  CheckResult r;
  r.name = std::move(name);
  r.measured = measured;
  r.tolerance = tolerance;
  r.passed = std::isfinite(measured) && measured <= tolerance;
  r.detail = std::move(detail);
  return r;
}

ModelConfig RandomSmallConfig(Rng& rng) {
  ModelConfig c;
  c.n_layers = 1 + rng.Below(2);
  c.n_heads = 1 + rng.Below(2);
  c.d_model = c.n_heads * (2 + rng.Below(3));
  c.d_ff = c.d_model + 1 + rng.Below(6);
  c.vocab_size = 6 + rng.Below(8);
  c.max_seq_len = 8;
  return c;
}

}  // namespace

Matrix FiniteDifferenceGradient(Matrix& m, const std::function<double()>& f, double h) {
  Matrix g(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double saved = m[i];
    m[i] = saved + h;
    const double up = f();
    m[i] = saved - h;
    const double down = f();
    m[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double RelativeError(const Matrix& analytic, const Matrix& numeric, double floor) {
  double diff = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
  }
  return diff / std::max(MaxAbs(numeric), floor);
}

ProbeSample RandomSample(const ModelConfig& config, std::size_t length, Rng& rng) {
  length = std::clamp<std::size_t>(length, 2, config.max_seq_len);
  ProbeSample s;
  s.tokens.resize(length);
  for (Token& t : s.tokens) t = static_cast<Token>(rng.Below(config.vocab_size));
  s.response_mask.assign(length, false);
  for (std::size_t t = 1; t < length; ++t) s.response_mask[t] = rng.Below(2) == 1;
  s.response_mask[1 + rng.Below(length - 1)] = true;
  return s;
}

CheckResult CheckModelGradients(const ValidationOptions& opts, std::size_t n_models) {
  ModelConfig config;
  config.n_layers = 2;
  config.d_model = 8;
  config.n_heads = 2;
  config.d_ff = 16;
  config.vocab_size = 11;
  config.max_seq_len = 8;
  double worst = 0.0;
  std::string worst_module;
  for (std::size_t i = 0; i < n_models; ++i) {
    Rng rng = Rng(opts.seed).Split(100 + i);
    ModelParams params = ModelParams::Random(config, rng);
    const ProbeSample sample = RandomSample(config, 4 + rng.Below(4), rng);
    const GradientSet analytic = SampleGradient(params, sample);
    for (const auto& [id, g] : analytic) {
      Matrix& w = params.projection(id);
      const Matrix fd = FiniteDifferenceGradient(
          w, [&] { return ProbeLoss(params, sample); }, opts.fd_step);
      const double err = RelativeError(g, fd);
      if (err > worst) {
        worst = err;
        worst_module = ModuleName(id);
      }
    }
  }
  return Make("model.projection_gradients_vs_fd", worst, 1e-5,
              std::to_string(n_models) + " models, 14 projections each; worst " +
                  worst_module);
}

std::vector<CheckResult> CheckInitialLoraGradients(const ValidationOptions& opts) {
  double worst_a = 0.0;
  double worst_b = 0.0;
  for (std::size_t i = 0; i < opts.seeds; ++i) {
    Rng rng = Rng(opts.seed).Split(200 + i);
    const ModelConfig config = RandomSmallConfig(rng);
    ModelParams params = ModelParams::Random(config, rng);
    const auto modules = AllModules(config);
    const ModuleId target = modules[rng.Below(modules.size())];
    const std::size_t rank = 1 + rng.Below(4);
    const double alpha = rng.Uniform(0.5, 4.0);
    LoraAdapter adapter =
        LoraAdapter::Create(target, rank, alpha, ProjOutDim(config, target.kind),
                            ProjInDim(config, target.kind), rng);
    const ProbeSample sample = RandomSample(config, 3 + rng.Below(5), rng);
    const Matrix base_w = params.projection(target);

    auto loss = [&] {
      params.projection(target) = EffectiveWeight(base_w, adapter);
      return ProbeLoss(params, sample);
    };
    params.projection(target) = EffectiveWeight(base_w, adapter);
    const GradientSet g = SampleGradient(params, sample, std::span(&target, 1));
    FactorGradients fg = ComputeFactorGradients(g.at(target), adapter);
    if (opts.fault_flip_grad_b) fg.grad_b *= -1.0;

    const Matrix fd_a = FiniteDifferenceGradient(adapter.mutable_a(), loss, opts.fd_step);
    const Matrix fd_b = FiniteDifferenceGradient(adapter.mutable_b(), loss, opts.fd_step);
    worst_a = std::max({worst_a, MaxAbs(fg.grad_a), MaxAbs(fd_a)});
    worst_b = std::max(worst_b, RelativeError(fg.grad_b, fd_b));
  }
  const std::string detail = std::to_string(opts.seeds) + " random models/adapters at B = 0";
  return {Make("lora_init.grad_a_zero_abs", worst_a, 1e-12, detail),
          Make("lora_init.grad_b_vs_fd", worst_b, 1e-5, detail)};
}

CheckResult CheckFactorGradients(const ValidationOptions& opts) {
  double worst = 0.0;
  for (std::size_t i = 0; i < opts.seeds; ++i) {
    Rng rng = Rng(opts.seed).Split(300 + i);
    const std::size_t d_out = 1 + rng.Below(6);
    const std::size_t d_in = 1 + rng.Below(6);
    const std::size_t rank = 1 + rng.Below(4);
    const Matrix g = UniformMatrix(rng, d_out, d_in, 1.0);
    LoraAdapter adapter(ModuleId{}, rng.Uniform(0.5, 4.0), UniformMatrix(rng, rank, d_in, 1.0),
                        UniformMatrix(rng, d_out, rank, 1.0));
    const FactorGradients fg = ComputeFactorGradients(g, adapter);
    auto bilinear = [&] { return FrobeniusInner(g, adapter.Delta()); };
    const Matrix fd_a = FiniteDifferenceGradient(adapter.mutable_a(), bilinear, opts.fd_step);
    const Matrix fd_b = FiniteDifferenceGradient(adapter.mutable_b(), bilinear, opts.fd_step);
    worst = std::max({worst, RelativeError(fg.grad_a, fd_a), RelativeError(fg.grad_b, fd_b)});
  }
  return Make("lora.factor_gradients_vs_fd", worst, 1e-6,
              "bilinear surrogate <G, s B A>, arbitrary A and B");
}

std::vector<CheckResult> CheckMoment(const ValidationOptions& opts) {
  const MomentCheck m = ExpectedAtACheck(4, 12, opts.moment_trials, Rng(opts.seed).Split(400));
  const double max_se = MaxAbs(m.stderr_);
  const std::string detail = "r=4 d_in=12 trials=" + std::to_string(opts.moment_trials) +
                             " target=" + FormatDouble(m.target_diag) +
                             " max_abs_dev=" + FormatDouble(m.max_abs_deviation);
  CheckResult diag = Make("kaiming.moment_diag_z", m.max_z_diag, 5.0, detail);
  CheckResult off = Make("kaiming.moment_offdiag_z", m.max_z_offdiag, 5.0, detail);
  diag.stderr_ = max_se;
  off.stderr_ = max_se;
  return {diag, off};
}

CheckResult CheckFisherTrace(const ValidationOptions& opts) {
  double worst = 0.0;
  for (std::size_t i = 0; i < opts.seeds; ++i) {
    Rng rng = Rng(opts.seed).Split(500 + i);
    const ModuleId id{0, ProjKind::kDown};
    const std::size_t rows = 1 + rng.Below(12);
    const std::size_t cols = 1 + rng.Below(12);
    const std::size_t n = 1 + rng.Below(10);
    std::vector<GradientSet> grads(n);
    for (auto& g : grads) {
      g[id] = UniformMatrix(rng, rows, cols, std::pow(10.0, rng.Uniform(-3.0, 3.0)));
    }
    const FisherTraceResult r = FisherTraceCheck(grads, id);
    worst = std::max(worst, std::abs(r.trace - r.sensitivity) /
                                std::max(std::abs(r.sensitivity), 1e-300));
  }
  return Make("fisher.trace_identity_rel", worst, 1e-12,
              std::to_string(opts.seeds) + " random gradient sets");
}

std::vector<CheckResult> CheckPageAgreement(const ValidationOptions& opts) {
  const ModelConfig& config = opts.page_model;
  Rng rng = Rng(opts.seed).Split(600);
  const ModelParams params = ModelParams::Random(config, rng);
  TaskSpec task;
  task.vocab_size = config.vocab_size;
  task.copy_length = std::min<std::size_t>(task.copy_length, (config.max_seq_len - 2) / 2);
  const auto probe = GenerateSet(task, 32, rng.NextU64());
  const auto grads = SampleGradients(params, probe, opts.workers);
  const SensitivityMap sens = SensitivityFromGradients(grads);
  const std::size_t rank = opts.page_rank;
  const double s = opts.page_alpha / static_cast<double>(rank);
  const PageMap closed = PageClosedFormMap(sens, rank, s, config);

  double worst_trace = 0.0;
  double worst_z = 0.0;
  double mean_rel_se = 0.0;
  const Rng mc_root = Rng(opts.seed).Split(601);
  std::size_t index = 0;
  for (const auto& [id, cf] : closed.values) {
    const double tf = PageTraceForm(grads, id, rank, s);
    worst_trace = std::max(worst_trace, std::abs(tf - cf) / std::max(std::abs(cf), 1e-300));
    const MonteCarloEstimate mc =
        PageMonteCarlo(grads, id, rank, s, opts.page_trials, mc_root.Split(index++),
                       opts.workers);
    const double z = mc.stderr_ > 0 ? std::abs(mc.estimate - cf) / mc.stderr_
                                    : (mc.estimate == cf ? 0.0 : INFINITY);
    worst_z = std::max(worst_z, z);
    if (cf > 0) mean_rel_se += mc.stderr_ / cf;
  }
  mean_rel_se /= static_cast<double>(closed.values.size());
  const std::string detail = std::to_string(closed.values.size()) + " modules, N=32, r=" +
                             std::to_string(rank) + " s=" + FormatDouble(s);
  CheckResult mc = Make("page.monte_carlo_z", worst_z, 4.0,
                        detail + " trials=" + std::to_string(opts.page_trials));
  mc.stderr_ = mean_rel_se;
  return {Make("page.closed_vs_trace_rel", worst_trace, 1e-12, detail), mc};
}

std::vector<CheckResult> RunValidation(const ValidationOptions& opts) {
  std::vector<CheckResult> all;
  auto append = [&all](std::vector<CheckResult> rs) {
    all.insert(all.end(), rs.begin(), rs.end());
  };
  all.push_back(CheckModelGradients(opts, opts.seeds));
  append(CheckInitialLoraGradients(opts));
  all.push_back(CheckFactorGradients(opts));
  append(CheckMoment(opts));
  all.push_back(CheckFisherTrace(opts));
  append(CheckPageAgreement(opts));
  return all;
}

std::string FormatValidationReport(const std::vector<CheckResult>& results) {
  std::ostringstream out;
  for (const auto& r : results) {
    out << (r.passed ? "PASS" : "FAIL") << "  " << r.name
        << "  measured=" << FormatDouble(r.measured)
        << "  tolerance=" << FormatDouble(r.tolerance);
    if (r.stderr_) out << "  stderr=" << FormatDouble(*r.stderr_);
    if (!r.detail.empty()) out << "  (" << r.detail << ")";
    out << '\n';
  }
  return out.str();
}

}  // namespace domlora
