#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "drvf/errors.hpp"

namespace drvf {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  void fill(double v);
  void resize(std::size_t rows, std::size_t cols);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Lower Cholesky factor L with A = L Lᵀ. Throws NumericError if A is not
// symmetric positive definite.
Matrix cholesky(const Matrix& a);
// Solves L x = b for lower-triangular L.
Vector forward_substitute(const Matrix& l, std::span<const double> b);
// Solves Lᵀ x = b for lower-triangular L.
Vector backward_substitute_transposed(const Matrix& l, std::span<const double> b);
// Solves A x = b given the Cholesky factor of A.
Vector cholesky_solve(const Matrix& l, std::span<const double> b);

}  // namespace drvf
