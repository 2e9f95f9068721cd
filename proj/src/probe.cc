// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/probe.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "domlora/parallel.h"

namespace domlora {

std::size_t ProbeSample::num_supervised() const {
  return static_cast<std::size_t>(
      std::count(response_mask.begin(), response_mask.end(), true));
}

void ProbeSample::Validate() const {
  if (tokens.size() != response_mask.size()) {
    throw std::invalid_argument("ProbeSample: mask length " +
                                std::to_string(response_mask.size()) +
                                " != token length " + std::to_string(tokens.size()));
  }
  if (num_supervised() == 0) {
    throw std::invalid_argument("ProbeSample: empty response mask");
  }
  if (response_mask.front()) {
    throw std::invalid_argument(
        "ProbeSample: position 0 has no context and cannot be supervised");
  }
}

double SensitivityMap::at(const ModuleId& id) const {
  const auto it = values.find(id);
  if (it == values.end()) {
    throw std::out_of_range("SensitivityMap: no entry for " + ModuleName(id));
  }
  return it->second;
}

double MaskedCrossEntropy(const Matrix& logits, const ProbeSample& sample,
                          Matrix* logit_grad) {
  sample.Validate();
  const std::size_t T = sample.tokens.size();
  if (logits.rows() != T) {
    throw std::invalid_argument("MaskedCrossEntropy: logits rows != sequence length");
  }
  const std::size_t V = logits.cols();
  const double inv_count = 1.0 / static_cast<double>(sample.num_supervised());
  if (logit_grad != nullptr) *logit_grad = Matrix(T, V);

  std::vector<double> probs(V);
  double loss = 0.0;
  for (std::size_t t = 1; t < T; ++t) {
    if (!sample.response_mask[t]) continue;
    const auto row = logits.row(t - 1);
    const Token target = sample.tokens[t];
    const double max_logit = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      probs[v] = std::exp(row[v] - max_logit);
      denom += probs[v];
    }
    const double log_denom = std::log(denom);
    loss += -(row[target] - max_logit - log_denom);
    if (logit_grad != nullptr) {
      auto g = logit_grad->row(t - 1);
      for (std::size_t v = 0; v < V; ++v) g[v] = probs[v] / denom * inv_count;
      g[target] -= inv_count;
    }
  }
  return loss * inv_count;
}

double ProbeLoss(const ModelParams& params, const ProbeSample& sample) {
  sample.Validate();
  return MaskedCrossEntropy(Logits(params, sample.tokens), sample);
}

GradientSet SampleGradient(const ModelParams& params, const ProbeSample& sample,
                           std::span<const ModuleId> modules) {
  sample.Validate();
  ForwardResult fwd = Forward(params, sample.tokens);
  Matrix dlogits;
  MaskedCrossEntropy(fwd.logits, sample, &dlogits);
  if (modules.empty()) {
    const auto all = AllModules(params.config);
    return BackwardProjectionGrads(params, fwd.cache, dlogits, all);
  }
  return BackwardProjectionGrads(params, fwd.cache, dlogits, modules);
}

std::vector<GradientSet> SampleGradients(const ModelParams& params,
                                         std::span<const ProbeSample> probe_set,
                                         std::size_t workers) {
  std::vector<GradientSet> out(probe_set.size());
  ParallelFor(probe_set.size(), workers,
              [&](std::size_t i) { out[i] = SampleGradient(params, probe_set[i]); });
  return out;
}

SensitivityMap SensitivityFromGradients(std::span<const GradientSet> gradients) {
  if (gradients.empty()) {
    throw std::invalid_argument("module sensitivity: empty probe set");
  }
  SensitivityMap map;
  map.num_samples = gradients.size();
  for (const auto& [id, g] : gradients.front()) map.values[id] = 0.0;
  for (const GradientSet& sample : gradients) {
    for (auto& [id, total] : map.values) {
      const auto it = sample.find(id);
      if (it == sample.end()) {
        throw std::invalid_argument("module sensitivity: sample is missing " +
                                    ModuleName(id));
      }
      total += FrobeniusSq(it->second);
    }
  }
  const double n = static_cast<double>(gradients.size());
  for (auto& [id, total] : map.values) total /= n;
  return map;
}

SensitivityMap ModuleSensitivity(const ModelParams& params,
                                 std::span<const ProbeSample> probe_set,
                                 std::size_t workers) {
  if (probe_set.empty()) {
    throw std::invalid_argument("module sensitivity: empty probe set");
  }
  const auto grads = SampleGradients(params, probe_set, workers);
  return SensitivityFromGradients(grads);
}

FisherTraceResult FisherTraceCheck(std::span<const GradientSet> gradients,
                                   const ModuleId& module) {
  if (gradients.empty()) {
    throw std::invalid_argument("FisherTraceCheck: empty gradient list");
  }
  const Matrix& first = gradients.front().at(module);
  std::vector<double> fisher_diag(first.size(), 0.0);
  double norm_total = 0.0;
  for (const GradientSet& sample : gradients) {
    const Matrix& g = sample.at(module);
    if (!g.SameShape(first)) {
      throw std::invalid_argument("FisherTraceCheck: gradient shape mismatch across samples");
    }
    const std::vector<double> v = Vectorize(g);
    for (std::size_t j = 0; j < v.size(); ++j) fisher_diag[j] += v[j] * v[j];
    norm_total += FrobeniusSq(g);
  }
  const double n = static_cast<double>(gradients.size());
  FisherTraceResult result;
  for (double f : fisher_diag) result.trace += f / n;
  result.sensitivity = norm_total / n;
  return result;
}

std::vector<ProbeSample> LoadProbeSet(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open probe set: " + path.string());
  std::vector<ProbeSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      ProbeSample s;
      for (const auto& t : j.at("tokens")) s.tokens.push_back(t.get<Token>());
      for (const auto& m : j.at("mask")) {
        s.response_mask.push_back(m.is_boolean() ? m.get<bool>() : m.get<int>() != 0);
      }
      s.Validate();
      samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw std::runtime_error(where + e.what());
    }
  }
  return samples;
}

void SaveProbeSet(const std::filesystem::path& path,
                  std::span<const ProbeSample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write probe set: " + path.string());
  for (const ProbeSample& s : samples) {
    nlohmann::json j;
    j["tokens"] = s.tokens;
    auto& mask = j["mask"] = nlohmann::json::array();
    for (bool b : s.response_mask) mask.push_back(b ? 1 : 0);
    out << j.dump() << '\n';
  }
}

}  // namespace domlora
