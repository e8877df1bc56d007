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

#include "mpfl/tensor.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include "absl/strings/str_cat.h"

namespace mpfl {
namespace {

absl::Status ShapeMismatch(const char* op, const Matrix& a, const Matrix& b) {
  return absl::InvalidArgumentError(absl::StrCat(
      op, ": shape mismatch ", a.ShapeString(), " vs ", b.ShapeString()));
}

}  // namespace

absl::StatusOr<Matrix> Matrix::FromData(size_t rows, size_t cols,
                                        std::vector<double> data) {
  if (data.size() != rows * cols) {
    return absl::InvalidArgumentError(
        absl::StrCat("matrix data length ", data.size(), " does not match ",
                     rows, "x", cols));
  }
  Matrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.data_ = std::move(data);
  return m;
}

Matrix Matrix::FromRows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const size_t r = rows.size();
  const size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  size_t i = 0;
  for (const auto& row : rows) {
    size_t j = 0;
    for (double v : row) {
      if (j < c) m(i, j) = v;
      ++j;
    }
    ++i;
  }
  return m;
}

Matrix Matrix::Identity(size_t n) {
  Matrix m(n, n);
  for (size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string Matrix::ShapeString() const {
  return absl::StrCat(rows_, "x", cols_);
}

absl::StatusOr<Matrix> Hadamard(const Matrix& a, const Matrix& b) {
  if (!a.SameShape(b)) return ShapeMismatch("hadamard", a, b);
  Matrix out(a.rows(), a.cols());
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (size_t k = 0; k < od.size(); ++k) od[k] = ad[k] * bd[k];
  return out;
}

absl::StatusOr<Matrix> HadamardReciprocal(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  auto ad = a.data();
  auto od = out.data();
  for (size_t k = 0; k < ad.size(); ++k) {
    if (ad[k] == 0.0) {
      return absl::OutOfRangeError(absl::StrCat(
          "hadamard_reciprocal: zero entry at (", k / a.cols(), ",",
          k % a.cols(), ")"));
    }
    od[k] = 1.0 / ad[k];
  }
  if (!out.AllFinite()) {
    return absl::OutOfRangeError("hadamard_reciprocal: non-finite result");
  }
  return out;
}

absl::StatusOr<Vector> MatVec(const Matrix& a, std::span<const double> v) {
  if (a.cols() != v.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "matvec: ", a.ShapeString(), " times vector of length ", v.size()));
  }
  Vector out(a.rows(), 0.0);
  for (size_t i = 0; i < a.rows(); ++i) {
    auto row = a.row(i);
    double acc = 0.0;
    for (size_t j = 0; j < row.size(); ++j) acc += row[j] * v[j];
    out[i] = acc;
  }
  return out;
}

absl::StatusOr<Vector> MatTransposeVec(const Matrix& a,
                                       std::span<const double> v) {
  if (a.rows() != v.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "matvec^T: ", a.ShapeString(), " with vector of length ", v.size()));
  }
  Vector out(a.cols(), 0.0);
  for (size_t i = 0; i < a.rows(); ++i) {
    auto row = a.row(i);
    const double vi = v[i];
    for (size_t j = 0; j < row.size(); ++j) out[j] += row[j] * vi;
  }
  return out;
}

Vector Relu(std::span<const double> v) {
  Vector out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return out;
}

absl::StatusOr<Matrix> ScaleRows(std::span<const double> d, const Matrix& a) {
  if (d.size() != a.rows()) {
    return absl::InvalidArgumentError(
        absl::StrCat("scale_rows: diagonal of length ", d.size(), " vs ",
                     a.ShapeString()));
  }
  Matrix out = a;
  for (size_t i = 0; i < a.rows(); ++i) {
    for (double& x : out.row(i)) x *= d[i];
  }
  return out;
}

absl::StatusOr<Matrix> ScaleCols(const Matrix& a, std::span<const double> d) {
  if (d.size() != a.cols()) {
    return absl::InvalidArgumentError(
        absl::StrCat("scale_cols: diagonal of length ", d.size(), " vs ",
                     a.ShapeString()));
  }
  Matrix out = a;
  for (size_t i = 0; i < a.rows(); ++i) {
    auto row = out.row(i);
    for (size_t j = 0; j < row.size(); ++j) row[j] *= d[j];
  }
  return out;
}

absl::StatusOr<Matrix> MatMul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) return ShapeMismatch("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  for (size_t i = 0; i < a.rows(); ++i) {
    for (size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

absl::StatusOr<Matrix> Add(const Matrix& a, const Matrix& b) {
  if (!a.SameShape(b)) return ShapeMismatch("add", a, b);
  Matrix out = a;
  auto od = out.data();
  auto bd = b.data();
  for (size_t k = 0; k < od.size(); ++k) od[k] += bd[k];
  return out;
}

absl::StatusOr<Matrix> Subtract(const Matrix& a, const Matrix& b) {
  if (!a.SameShape(b)) return ShapeMismatch("subtract", a, b);
  Matrix out = a;
  auto od = out.data();
  auto bd = b.data();
  for (size_t k = 0; k < od.size(); ++k) od[k] -= bd[k];
  return out;
}

Matrix Scale(const Matrix& a, double c) {
  Matrix out = a;
  for (double& x : out.data()) x *= c;
  return out;
}

absl::Status Axpy(double c, const Matrix& x, Matrix& y) {
  if (!x.SameShape(y)) return ShapeMismatch("axpy", x, y);
  auto xd = x.data();
  auto yd = y.data();
  for (size_t k = 0; k < yd.size(); ++k) yd[k] += c * xd[k];
  return absl::OkStatus();
}

Matrix Outer(std::span<const double> u, std::span<const double> v) {
  Matrix out(u.size(), v.size());
  for (size_t i = 0; i < u.size(); ++i) {
    auto row = out.row(i);
    for (size_t j = 0; j < v.size(); ++j) row[j] = u[i] * v[j];
  }
  return out;
}

double FrobeniusNorm(const Matrix& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x * x;
  return std::sqrt(acc);
}

double MaxAbs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double MaxRelativeError(std::span<const double> actual,
                        std::span<const double> reference) {
  if (actual.size() != reference.size()) return INFINITY;
  double err = 0.0;
  for (size_t k = 0; k < actual.size(); ++k) {
    const double d = std::abs(actual[k] - reference[k]);
    if (std::isnan(d)) return INFINITY;
    err = std::max(err, d);
  }
  const double scale = MaxAbs(reference);
  return scale > 0.0 ? err / scale : err;
}

double MaxRelativeError(const Matrix& actual, const Matrix& reference) {
  if (!actual.SameShape(reference)) return INFINITY;
  return MaxRelativeError(actual.data(), reference.data());
}

}  // namespace mpfl
