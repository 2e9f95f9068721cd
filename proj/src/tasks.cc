// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/tasks.h"

#include <stdexcept>

namespace domlora {

std::string_view TaskName(TaskKind task) {
  return task == TaskKind::kCopy ? "copy" : "mod-add";
}

std::optional<TaskKind> ParseTask(std::string_view name) {
  if (name == "copy") return TaskKind::kCopy;
  if (name == "mod-add" || name == "modadd") return TaskKind::kModAdd;
  return std::nullopt;
}

std::size_t TaskSpec::sequence_length() const {
  return kind == TaskKind::kCopy ? 2 * copy_length + 2 : 6;
}

ProbeSample GenerateSample(const TaskSpec& spec, Rng& rng) {
  if (spec.vocab_size <= kFirstContent + 1) {
    throw std::invalid_argument("task: vocab_size must exceed 5");
  }
  const std::uint64_t modulus = spec.vocab_size - kFirstContent;
  ProbeSample s;
  if (spec.kind == TaskKind::kCopy) {
    if (spec.copy_length == 0) throw std::invalid_argument("task: copy_length must be >= 1");
    std::vector<Token> body(spec.copy_length);
    for (Token& t : body) t = kFirstContent + static_cast<Token>(rng.Below(modulus));
    s.tokens.push_back(kBos);
    s.tokens.insert(s.tokens.end(), body.begin(), body.end());
    s.tokens.push_back(kSep);
    s.tokens.insert(s.tokens.end(), body.begin(), body.end());
    s.response_mask.assign(s.tokens.size(), false);
    for (std::size_t i = spec.copy_length + 2; i < s.tokens.size(); ++i) {
      s.response_mask[i] = true;
    }
  } else {
    const auto a = rng.Below(modulus);
    const auto b = rng.Below(modulus);
    const auto c = (a + b) % modulus;
    s.tokens = {kBos, static_cast<Token>(kFirstContent + a), kPlus,
                static_cast<Token>(kFirstContent + b), kEq,
                static_cast<Token>(kFirstContent + c)};
    s.response_mask = {false, false, false, false, false, true};
  }
  return s;
}

std::vector<ProbeSample> GenerateSet(const TaskSpec& spec, std::size_t count,
                                     std::uint64_t seed) {
  const Rng root(seed);
  std::vector<ProbeSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng stream = root.Split(i);
    out.push_back(GenerateSample(spec, stream));
  }
  return out;
}

}  // namespace domlora
