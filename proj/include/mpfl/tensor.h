/*
 * Copyright 2026 The MPFL Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense row-major matrices and vectors with the Hadamard-product operations
// the perturbation scheme is built on. Everything is 64-bit floating point.

#ifndef MPFL_TENSOR_H_
#define MPFL_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace mpfl {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  // Fails when `data.size() != rows * cols`.
  static absl::StatusOr<Matrix> FromData(size_t rows, size_t cols,
                                         std::vector<double> data);
  // Brace-literal convenience for tests and fixtures. Rows must be equal length.
  static Matrix FromRows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix Identity(size_t n);

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool SameShape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(size_t i, size_t j) { return data_[i * cols_ + j]; }
  double operator()(size_t i, size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  bool AllFinite() const;
  std::string ShapeString() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

// result[i][j] = a[i][j] * b[i][j].
absl::StatusOr<Matrix> Hadamard(const Matrix& a, const Matrix& b);

// result[i][j] = 1 / a[i][j]. Zero entries are a domain error.
absl::StatusOr<Matrix> HadamardReciprocal(const Matrix& a);

absl::StatusOr<Vector> MatVec(const Matrix& a, std::span<const double> v);

// a^T v without materializing the transpose.
absl::StatusOr<Vector> MatTransposeVec(const Matrix& a, std::span<const double> v);

// relu(0) = 0.
Vector Relu(std::span<const double> v);

// diag(d) * a and a * diag(d).
absl::StatusOr<Matrix> ScaleRows(std::span<const double> d, const Matrix& a);
absl::StatusOr<Matrix> ScaleCols(const Matrix& a, std::span<const double> d);

absl::StatusOr<Matrix> MatMul(const Matrix& a, const Matrix& b);

absl::StatusOr<Matrix> Add(const Matrix& a, const Matrix& b);
absl::StatusOr<Matrix> Subtract(const Matrix& a, const Matrix& b);
Matrix Scale(const Matrix& a, double c);

// y += c * x, elementwise. Shapes must agree.
absl::Status Axpy(double c, const Matrix& x, Matrix& y);

// Outer product u v^T.
Matrix Outer(std::span<const double> u, std::span<const double> v);

double FrobeniusNorm(const Matrix& a);
double MaxAbs(std::span<const double> v);

// max |a - b| / max |b|, i.e. the max-norm error relative to the reference's
// max-norm. Falls back to the absolute error when the reference is all zero.
double MaxRelativeError(std::span<const double> actual,
                        std::span<const double> reference);
double MaxRelativeError(const Matrix& actual, const Matrix& reference);

}  // namespace mpfl

#endif  // MPFL_TENSOR_H_
