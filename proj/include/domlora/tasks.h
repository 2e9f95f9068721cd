// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_TASKS_H_
#define DOMLORA_TASKS_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "domlora/probe.h"
#include "domlora/rng.h"

namespace domlora {

// Synthetic supervised tasks.
//
//   copy:    BOS x_1 .. x_n SEP x_1 .. x_n      (second copy supervised)
//   mod-add: BOS a PLUS b EQ c, c = (a + b) mod m  (c supervised)
//
// Reserved ids: 0 BOS, 1 SEP, 2 PLUS, 3 EQ. Content tokens start at 4; the
// modulus is vocab_size - 4.
enum class TaskKind { kCopy, kModAdd };

inline constexpr Token kBos = 0;
inline constexpr Token kSep = 1;
inline constexpr Token kPlus = 2;
inline constexpr Token kEq = 3;
inline constexpr Token kFirstContent = 4;

std::string_view TaskName(TaskKind task);
std::optional<TaskKind> ParseTask(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::kCopy;
  std::size_t vocab_size = 64;
  std::size_t copy_length = 6;

  std::size_t sequence_length() const;
};

ProbeSample GenerateSample(const TaskSpec& spec, Rng& rng);

// Sample i is drawn from stream Rng(seed).Split(i), so any prefix of a set is
// the same regardless of the requested count.
std::vector<ProbeSample> GenerateSet(const TaskSpec& spec, std::size_t count,
                                     std::uint64_t seed);

}  // namespace domlora

#endif  // DOMLORA_TASKS_H_
