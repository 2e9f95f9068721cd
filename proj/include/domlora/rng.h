// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_RNG_H_
#define DOMLORA_RNG_H_

#include <cstddef>
#include <cstdint>

#include "domlora/tensor.h"

namespace domlora {

// Counter-based generator: draw n of stream `key` is Mix(key, n), where Mix is
// the SplitMix64 finalizer. Streams are split by hashing a child index into
// the key, so per-sample and per-trial streams can be derived up front and
// handed to workers without sharing state. Output depends only on integer
// arithmetic and is identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : key_(Mix(seed ^ kSeedSalt)) {}

  std::uint64_t seed_key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t NextU64() { return Mix(key_ + kGamma * ++counter_); }
  // Uniform in [0, 1) with 53 random bits.
  double NextDouble() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }
  // Uniform in [lo, hi).
  double Uniform(double lo, double hi) { return lo + (hi - lo) * NextDouble(); }
  // Uniform integer in [0, n).
  std::uint64_t Below(std::uint64_t n);

  // Independent child stream; does not advance this stream.
  Rng Split(std::uint64_t index) const;

  static std::uint64_t Mix(std::uint64_t z);

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  static constexpr std::uint64_t kSeedSalt = 0x243f6a8885a308d3ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Entries i.i.d. from U(-1/sqrt(d_in), 1/sqrt(d_in)); the standard LoRA rule
// for the down-projecting factor A (rows = rank, cols = d_in).
Matrix KaimingUniform(Rng& rng, std::size_t rows, std::size_t d_in);

// Entries i.i.d. from U(-bound, bound).
Matrix UniformMatrix(Rng& rng, std::size_t rows, std::size_t cols, double bound);

}  // namespace domlora

#endif  // DOMLORA_RNG_H_
