#include "gdod/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gdod/errors.hpp"

namespace gdod {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw InvalidInput("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows, std::size_t cols) {
  Matrix out(0, cols);
  out.data_.reserve(rows.size() * cols);
  for (const auto& r : rows) out.append_row(r);
  return out;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Vector Matrix::column(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::append_row(std::span<const double> values) {
  if (values.size() != cols_) throw InvalidInput("Matrix::append_row: width mismatch");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

Matrix Matrix::transpose() const {
  Matrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

bool Matrix::all_finite() const { return gdod::all_finite(data_); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InvalidInput("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) axpy(a(i, k), b.row(k), out_row);
  }
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InvalidInput("matmul_transposed: inner dimensions differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

Vector vecmat(std::span<const double> x, const Matrix& a) {
  if (x.size() != a.rows()) throw InvalidInput("vecmat: dimension mismatch");
  Vector out(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) axpy(x[r], a.row(r), out);
  return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.cols()) throw InvalidInput("matvec: dimension mismatch");
  Vector out(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) out[r] = dot(a.row(r), x);
  return out;
}

namespace {

void require_finite(const Matrix& m, const char* op) {
  if (!m.all_finite()) throw InvalidInput(std::string(op) + ": non-finite input");
}

void require_cutoff(double rel_cutoff, const char* op) {
  if (!(rel_cutoff > 0.0 && rel_cutoff < 1.0))
    throw InvalidInput(std::string(op) + ": rel_cutoff must lie in (0, 1)");
}

// Two passes of modified Gram-Schmidt ("twice is enough").
void orthogonalize_against(std::span<double> v, const std::vector<Vector>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) axpy(-dot(v, b), b, v);
  }
}

}  // namespace

SymmetricEigen symmetric_eigen(const Matrix& input) {
  if (input.rows() != input.cols()) throw InvalidInput("symmetric_eigen: matrix not square");
  require_finite(input, "symmetric_eigen");
  const std::size_t n = input.rows();
  Matrix a = input;
  Matrix v = Matrix::identity(n);

  const double total = squared_norm(a.data());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off == 0.0 || off <= 1e-32 * total) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(k, r) = v(r, order[k]);
  }
  return out;
}

ThinSvd thin_svd(const Matrix& m, double rel_cutoff) {
  require_finite(m, "thin_svd");
  require_cutoff(rel_cutoff, "thin_svd");
  const std::size_t d = m.cols();
  ThinSvd out{{}, Matrix(0, d)};
  if (m.rows() == 0 || d == 0) return out;

  const SymmetricEigen eig = symmetric_eigen(matmul_transposed(m, m));

  // ||M^T u|| is a better estimate of sigma than sqrt(lambda): it does not
  // square the roundoff of the Gram route.
  std::vector<Vector> candidates;
  Vector sigmas;
  double sigma_max = 0.0;
  for (std::size_t k = 0; k < eig.values.size(); ++k) {
    candidates.push_back(vecmat(eig.vectors.row(k), m));
    sigmas.push_back(norm(candidates.back()));
    sigma_max = std::max(sigma_max, sigmas.back());
  }
  if (sigma_max == 0.0) return out;

  std::vector<Vector> accepted;
  std::vector<std::pair<double, std::size_t>> keyed;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (sigmas[k] <= rel_cutoff * sigma_max) continue;
    Vector w = candidates[k];
    orthogonalize_against(w, accepted);
    const double residual = norm(w);
    if (residual <= rel_cutoff * sigma_max) continue;
    for (double& x : w) x /= residual;
    keyed.emplace_back(sigmas[k], accepted.size());
    accepted.push_back(std::move(w));
  }
  // Order only changes between numerically tied values.
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (const auto& [sigma, index] : keyed) {
    out.singular_values.push_back(sigma);
    out.right_vectors.append_row(accepted[index]);
  }
  return out;
}

Matrix qr_orthonormalize(const Matrix& m, double rel_cutoff) {
  require_finite(m, "qr_orthonormalize");
  require_cutoff(rel_cutoff, "qr_orthonormalize");
  std::vector<Vector> accepted;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    Vector v(m.row(r).begin(), m.row(r).end());
    const double original = norm(v);
    if (original == 0.0) continue;
    orthogonalize_against(v, accepted);
    const double residual = norm(v);
    if (residual <= rel_cutoff * original) continue;
    for (double& x : v) x /= residual;
    accepted.push_back(std::move(v));
  }
  return Matrix::from_rows(accepted, m.cols());
}

Matrix random_orthonormal(std::size_t r, std::size_t d, Rng& rng) {
  if (r > d) throw InvalidInput("random_orthonormal: r exceeds d");
  std::vector<Vector> accepted;
  while (accepted.size() < r) {
    Vector v(d);
    for (double& x : v) x = rng.normal();
    const double original = norm(v);
    orthogonalize_against(v, accepted);
    const double residual = norm(v);
    if (residual <= 1e-6 * original) continue;  // redraw; probability ~0
    for (double& x : v) x /= residual;
    accepted.push_back(std::move(v));
  }
  return Matrix::from_rows(accepted, d);
}

Matrix randomized_range_basis(const Matrix& m, std::size_t target_r, std::size_t oversample,
                              Rng& rng, double rel_cutoff) {
  require_finite(m, "randomized_range_basis");
  if (target_r == 0) throw InvalidInput("randomized_range_basis: target_r must be >= 1");
  const std::size_t sketch_rows = target_r + oversample;

  Matrix omega(sketch_rows, m.rows());
  for (double& x : omega.data()) x = rng.normal();
  const Matrix sketch = matmul(omega, m);
  const Matrix q = qr_orthonormalize(sketch, rel_cutoff);
  if (q.rows() == 0) return Matrix(0, m.cols());

  // Coordinates of M's rows in the sketch basis, then their dominant
  // right singular directions.
  const ThinSvd small = thin_svd(matmul_transposed(m, q), rel_cutoff);
  const std::size_t keep = std::min(target_r, small.right_vectors.rows());
  Matrix out(0, m.cols());
  for (std::size_t k = 0; k < keep; ++k) out.append_row(vecmat(small.right_vectors.row(k), q));
  return out;
}

MinNormPoint min_norm_point_2(std::span<const double> g1, std::span<const double> g2) {
  if (g1.size() != g2.size()) throw InvalidInput("min_norm_point_2: dimension mismatch");
  if (!all_finite(g1) || !all_finite(g2)) throw InvalidInput("min_norm_point_2: non-finite input");
  Vector diff(g1.begin(), g1.end());
  axpy(-1.0, g2, diff);
  const double dd = squared_norm(diff);
  if (dd == 0.0) return {{0.5, 0.5}, Vector(g1.begin(), g1.end())};
  const double gamma = std::clamp(-dot(diff, g2) / dd, 0.0, 1.0);
  Vector point(g2.begin(), g2.end());
  axpy(gamma, diff, point);
  return {{gamma, 1.0 - gamma}, std::move(point)};
}

MinNormPoint frank_wolfe_min_norm(const Matrix& g, std::size_t iters) {
  if (iters == 0) throw InvalidInput("frank_wolfe_min_norm: iters must be >= 1");
  if (g.rows() == 0) throw InvalidInput("frank_wolfe_min_norm: need at least one vector");
  require_finite(g, "frank_wolfe_min_norm");
  const std::size_t k = g.rows();
  const Matrix gram = matmul_transposed(g, g);
  double scale = 0.0;
  for (std::size_t i = 0; i < k; ++i) scale = std::max(scale, gram(i, i));

  Vector w(k, 1.0 / static_cast<double>(k));
  for (std::size_t it = 0; it < iters; ++it) {
    const Vector gw = matvec(gram, w);
    const double wgw = dot(w, gw);

    std::size_t toward = 0;
    std::size_t away = k;
    for (std::size_t i = 0; i < k; ++i) {
      if (gw[i] < gw[toward]) toward = i;
      if (w[i] > 0.0 && (away == k || gw[i] > gw[away])) away = i;
    }
    const double fw_gap = wgw - gw[toward];
    if (fw_gap <= 1e-15 * std::max(scale, 1e-300)) break;
    const double away_gap = gw[away] - wgw;

    // Direction dir = e_toward - w (FW step) or w - e_away (away step).
    Vector dir(k);
    double max_step = 1.0;
    if (fw_gap >= away_gap) {
      for (std::size_t i = 0; i < k; ++i) dir[i] = -w[i];
      dir[toward] += 1.0;
    } else {
      for (std::size_t i = 0; i < k; ++i) dir[i] = w[i];
      dir[away] -= 1.0;
      max_step = w[away] / (1.0 - w[away]);
    }
    const double slope = dot(gw, dir);
    const double curvature = dot(dir, matvec(gram, dir));
    if (curvature <= 0.0 || slope >= 0.0) break;
    const double step = std::min(-slope / curvature, max_step);
    for (std::size_t i = 0; i < k; ++i) w[i] = std::max(0.0, w[i] + step * dir[i]);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= total;
  }
  return {w, vecmat(w, g)};
}

Vector project_to_simplex(std::span<const double> v) {
  if (v.empty()) return {};
  Vector sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    running += sorted[i];
    const double candidate = (running - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - candidate > 0.0) theta = candidate;
  }
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

}  // namespace gdod
