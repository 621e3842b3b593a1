#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>

#include "gdod/numerics.hpp"
#include "gdod/rng.hpp"

namespace gdod {

// Right singular vectors of the gradient matrix.
struct SvdBasis {};

// Gram-Schmidt over the gradient rows in stacking order.
struct QrBasis {};

// Orthonormal directions drawn independently of the gradients.
// Default rank: min(rows(M), D).
struct RandomBasis {
  std::optional<std::size_t> rank;
};

// Randomized range finder. Default target rank: rows(M).
struct RandDecBasis {
  std::optional<std::size_t> target_rank;
  std::size_t oversample = 4;
};

using BasisMethod = std::variant<SvdBasis, QrBasis, RandomBasis, RandDecBasis>;

// "svd" | "qr" | "random" | "randdec"
std::string basis_method_name(const BasisMethod& method);
BasisMethod parse_basis_method(std::string_view name);
bool is_data_derived(const BasisMethod& method);

struct OrthogonalBasis {
  Matrix vectors;  // r x D, orthonormal rows
  BasisMethod method;
  // Number of directions recovered from the gradient matrix; 0 for Random,
  // which never looks at the gradient values.
  std::size_t source_rank = 0;

  std::size_t rank() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
};

OrthogonalBasis build_basis(const Matrix& m, const BasisMethod& method, Rng& rng,
                            double rel_cutoff = kDefaultRelCutoff);

// p[u] = b_u . g
Vector project(const OrthogonalBasis& basis, std::span<const double> g);

// sum_u p[u] b_u
Vector reconstruct(const OrthogonalBasis& basis, std::span<const double> p);

}  // namespace gdod
