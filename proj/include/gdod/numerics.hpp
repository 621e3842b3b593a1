#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "gdod/rng.hpp"

namespace gdod {

using Vector = std::vector<double>;

// Singular values below kDefaultRelCutoff * sigma_max are treated as zero.
inline constexpr double kDefaultRelCutoff = 1e-8;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix from_rows(const std::vector<Vector>& rows, std::size_t cols);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  Vector column(std::size_t c) const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  void append_row(std::span<const double> values);
  Matrix transpose() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double squared_norm(std::span<const double> a);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
bool all_finite(std::span<const double> a);

// A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// A * B^T (both operands stored row-major; avoids a transpose copy)
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
// Row-vector times matrix: x^T A
Vector vecmat(std::span<const double> x, const Matrix& a);
// A x
Vector matvec(const Matrix& a, std::span<const double> x);

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // row k is the unit eigenvector for values[k]
};

// Cyclic Jacobi rotations on a symmetric matrix.
SymmetricEigen symmetric_eigen(const Matrix& a);

struct ThinSvd {
  Vector singular_values;  // descending, all > rel_cutoff * sigma_max
  Matrix right_vectors;    // r x cols, orthonormal rows
};

/// Thin SVD keeping only the numerically non-zero part.
///
/// Works through the Gram matrix M M^T (rows(M) is small in this library),
/// then forms right vectors as M^T u / sigma. The right vectors are polished by
/// a second Gram-Schmidt pass so that orthonormality holds to roundoff even
/// for nearly degenerate singular values.
ThinSvd thin_svd(const Matrix& m, double rel_cutoff = kDefaultRelCutoff);

// Modified Gram-Schmidt over the rows of m in order. A row is dropped when its
// residual norm is <= rel_cutoff times its original norm.
Matrix qr_orthonormalize(const Matrix& m, double rel_cutoff = kDefaultRelCutoff);

// r orthonormal rows in R^d from Gram-Schmidt of i.i.d. standard normals.
Matrix random_orthonormal(std::size_t r, std::size_t d, Rng& rng);

// Randomized range finder on the row space of m: sketch Y = Omega M with a
// Gaussian Omega of (target_r + oversample) rows, orthonormalize, then keep the
// top target_r right singular directions of the projected matrix.
Matrix randomized_range_basis(const Matrix& m, std::size_t target_r, std::size_t oversample,
                              Rng& rng, double rel_cutoff = kDefaultRelCutoff);

struct MinNormPoint {
  Vector weights;  // on the probability simplex
  Vector point;    // sum_i weights[i] * g_i
};

// Closed-form minimum-norm point on the segment [g1, g2].
MinNormPoint min_norm_point_2(std::span<const double> g1, std::span<const double> g2);

// Minimum-norm point of the convex hull of the rows of g. Away-step
// Frank-Wolfe with exact line search, started from uniform weights.
MinNormPoint frank_wolfe_min_norm(const Matrix& g, std::size_t iters);

// Euclidean projection onto {w >= 0, sum w = 1}.
Vector project_to_simplex(std::span<const double> v);

}  // namespace gdod
