// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "domlora/rng.h"

#include <cmath>
#include <stdexcept>

namespace domlora {

std::uint64_t Rng::Mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::Below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::Below: n must be positive");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = NextU64();
  } while (x >= limit);
  return x % n;
}

Rng Rng::Split(std::uint64_t index) const {
  Rng child;
  child.key_ = Mix(key_ ^ Mix(index + kGamma));
  child.counter_ = 0;
  return child;
}

Matrix UniformMatrix(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.Uniform(-bound, bound);
  return m;
}

Matrix KaimingUniform(Rng& rng, std::size_t rows, std::size_t d_in) {
  if (rows == 0 || d_in == 0) {
    throw std::invalid_argument("KaimingUniform: dimensions must be >= 1");
  }
  return UniformMatrix(rng, rows, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)));
}

}  // namespace domlora
