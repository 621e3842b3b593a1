#pragma once

#include <cmath>
#include <span>

#include "gdod/numerics.hpp"
#include "gdod/rng.hpp"

namespace gdod::test {

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

inline Vector gaussian_vector(std::size_t n, Rng& rng) {
  Vector v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// max |B B^T - I|
inline double orthonormality_error(const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j)
      worst = std::max(worst, std::abs(dot(b.row(i), b.row(j)) - (i == j ? 1.0 : 0.0)));
  return worst;
}

// Distance from g to its projection on the row span of b (b orthonormal).
inline double span_residual(const Matrix& b, std::span<const double> g) {
  Vector r(g.begin(), g.end());
  for (std::size_t u = 0; u < b.rows(); ++u) axpy(-dot(b.row(u), g), b.row(u), r);
  return norm(r);
}

}  // namespace gdod::test
