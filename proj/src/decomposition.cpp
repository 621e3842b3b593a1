#include "gdod/decomposition.hpp"

#include <algorithm>

#include "gdod/errors.hpp"

namespace gdod {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

std::string basis_method_name(const BasisMethod& method) {
  return std::visit(Overloaded{
                        [](const SvdBasis&) { return std::string("svd"); },
                        [](const QrBasis&) { return std::string("qr"); },
                        [](const RandomBasis&) { return std::string("random"); },
                        [](const RandDecBasis&) { return std::string("randdec"); },
                    },
                    method);
}

BasisMethod parse_basis_method(std::string_view name) {
  if (name == "svd") return SvdBasis{};
  if (name == "qr") return QrBasis{};
  if (name == "random") return RandomBasis{};
  if (name == "randdec") return RandDecBasis{};
  throw InvalidInput("unknown basis method '" + std::string(name) + "'");
}

bool is_data_derived(const BasisMethod& method) {
  return !std::holds_alternative<RandomBasis>(method);
}

OrthogonalBasis build_basis(const Matrix& m, const BasisMethod& method, Rng& rng,
                            double rel_cutoff) {
  if (m.rows() == 0) throw InvalidInput("build_basis: gradient matrix has no rows");
  if (!m.all_finite()) throw InvalidInput("build_basis: non-finite input");

  OrthogonalBasis out{Matrix(0, m.cols()), method, 0};
  std::visit(Overloaded{
                 [&](const SvdBasis&) { out.vectors = thin_svd(m, rel_cutoff).right_vectors; },
                 [&](const QrBasis&) { out.vectors = qr_orthonormalize(m, rel_cutoff); },
                 [&](const RandomBasis& p) {
                   const std::size_t r = p.rank.value_or(std::min(m.rows(), m.cols()));
                   if (r > m.cols()) throw InvalidInput("build_basis: random rank exceeds D");
                   out.vectors = random_orthonormal(r, m.cols(), rng);
                 },
                 [&](const RandDecBasis& p) {
                   out.vectors = randomized_range_basis(m, p.target_rank.value_or(m.rows()),
                                                        p.oversample, rng, rel_cutoff);
                 },
             },
             method);
  if (is_data_derived(method)) out.source_rank = out.vectors.rows();
  return out;
}

Vector project(const OrthogonalBasis& basis, std::span<const double> g) {
  if (g.size() != basis.dim()) throw InvalidInput("project: dimension mismatch");
  return matvec(basis.vectors, g);
}

Vector reconstruct(const OrthogonalBasis& basis, std::span<const double> p) {
  if (p.size() != basis.rank()) throw InvalidInput("reconstruct: dimension mismatch");
  return vecmat(p, basis.vectors);
}

}  // namespace gdod
