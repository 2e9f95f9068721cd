// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_TENSOR_H_
#define DOMLORA_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace domlora {

// Dense row-major matrix of doubles. Value type; copies are deep.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix Identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool SameShape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  void Fill(double v);
  bool AllFinite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  // Bitwise equality of shape and contents.
  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

Matrix Transpose(const Matrix& m);
// a (m x k) * b (k x n)
Matrix MatMul(const Matrix& a, const Matrix& b);
// a (m x k) * b^T where b is (n x k)
Matrix MatMulNT(const Matrix& a, const Matrix& b);
// a^T * b where a is (k x m), b is (k x n)
Matrix MatMulTN(const Matrix& a, const Matrix& b);
// a += b^T * c, accumulating without a temporary.
void AddMatMulTN(Matrix& a, const Matrix& b, const Matrix& c);

// Sum of squared entries. Each row is summed left to right into a partial,
// then row partials are added top to bottom.
double FrobeniusSq(const Matrix& m);

// tr(m^T m), evaluated through the cyclic identity tr(m^T m) = tr(m m^T):
// diagonal entry a of m m^T is the dot product of row a with itself. The
// accumulation order matches FrobeniusSq, so the two agree bit for bit.
double TraceOfGram(const Matrix& m);

double Trace(const Matrix& m);
double Dot(std::span<const double> a, std::span<const double> b);
// Frobenius inner product <a, b>.
double FrobeniusInner(const Matrix& a, const Matrix& b);
double MaxAbs(const Matrix& m);

// Row-major flattening.
std::vector<double> Vectorize(const Matrix& m);
double SquaredNorm(std::span<const double> v);

}  // namespace domlora

#endif  // DOMLORA_TENSOR_H_
