#include "gdod/combiners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gdod/errors.hpp"

namespace gdod {

void GradientBundle::validate() const {
  if (per_example.empty()) throw InvalidInput("GradientBundle: no tasks");
  if (task_weights.size() != per_example.size())
    throw InvalidInput("GradientBundle: task_weights size differs from task count");
  for (const auto& m : per_example) {
    if (m.rows() != examples() || m.cols() != dim())
      throw InvalidInput("GradientBundle: per-task matrices differ in shape");
    if (!m.all_finite()) throw InvalidInput("GradientBundle: non-finite gradient");
  }
  if (examples() == 0) throw InvalidInput("GradientBundle: no examples");
  for (double w : task_weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("GradientBundle: bad task weight");
}

Matrix GradientBundle::task_means() const {
  Matrix out(tasks(), dim());
  const double inv_m = 1.0 / static_cast<double>(examples());
  for (std::size_t i = 0; i < tasks(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < examples(); ++j) axpy(1.0, per_example[i].row(j), row);
    for (double& x : row) x *= inv_m;
  }
  return out;
}

void GroupedBundle::validate() const {
  if (per_group.empty()) throw InvalidInput("GroupedBundle: no tasks");
  if (group_sizes.empty()) throw InvalidInput("GroupedBundle: no groups");
  if (task_weights.size() != per_group.size())
    throw InvalidInput("GroupedBundle: task_weights size differs from task count");
  for (const auto& m : per_group) {
    if (m.rows() != groups() || m.cols() != dim())
      throw InvalidInput("GroupedBundle: per-task matrices differ in shape");
    if (!m.all_finite()) throw InvalidInput("GroupedBundle: non-finite gradient");
  }
  for (std::size_t s : group_sizes)
    if (s == 0) throw InvalidInput("GroupedBundle: empty group");
}

Matrix GroupedBundle::task_means() const {
  Matrix out(tasks(), dim());
  const double total = static_cast<double>(
      std::accumulate(group_sizes.begin(), group_sizes.end(), std::size_t{0}));
  for (std::size_t i = 0; i < tasks(); ++i) {
    auto row = out.row(i);
    for (std::size_t g = 0; g < groups(); ++g)
      axpy(static_cast<double>(group_sizes[g]) / total, per_group[i].row(g), row);
  }
  return out;
}

Matrix GroupedBundle::stacked() const {
  Matrix out(0, dim());
  for (const auto& m : per_group)
    for (std::size_t g = 0; g < m.rows(); ++g) out.append_row(m.row(g));
  return out;
}

GroupedBundle group_gradients(const GradientBundle& bundle, std::size_t groups, Rng& rng) {
  std::vector<std::size_t> permutation(bundle.examples());
  std::iota(permutation.begin(), permutation.end(), 0);
  rng.shuffle(std::span<std::size_t>(permutation));
  return group_gradients(bundle, groups, permutation);
}

GroupedBundle group_gradients(const GradientBundle& bundle, std::size_t groups,
                              std::span<const std::size_t> permutation) {
  bundle.validate();
  const std::size_t m = bundle.examples();
  if (groups == 0 || groups > m) throw InvalidInput("group_gradients: need 1 <= G <= m");
  if (permutation.size() != m) throw InvalidInput("group_gradients: permutation length != m");

  GroupedBundle out;
  out.task_weights = bundle.task_weights;
  // First m % G chunks take one extra example.
  const std::size_t base = m / groups;
  const std::size_t extra = m % groups;
  for (std::size_t g = 0; g < groups; ++g) out.group_sizes.push_back(base + (g < extra ? 1 : 0));

  for (const auto& task : bundle.per_example) {
    Matrix pooled(groups, bundle.dim());
    std::size_t cursor = 0;
    for (std::size_t g = 0; g < groups; ++g) {
      auto row = pooled.row(g);
      const double inv = 1.0 / static_cast<double>(out.group_sizes[g]);
      for (std::size_t k = 0; k < out.group_sizes[g]; ++k, ++cursor)
        axpy(inv, task.row(permutation[cursor]), row);
    }
    out.per_group.push_back(std::move(pooled));
  }
  return out;
}

std::string mask_rule_name(MaskRule rule) {
  return rule == MaskRule::kAllAgree ? "all_agree" : "literal_product";
}

MaskRule parse_mask_rule(std::string_view name) {
  if (name == "all_agree") return MaskRule::kAllAgree;
  if (name == "literal_product") return MaskRule::kLiteralProduct;
  throw InvalidInput("unknown mask rule '" + std::string(name) + "'");
}

std::vector<bool> shared_mask(const Matrix& coords, MaskRule rule) {
  if (!coords.all_finite()) throw InvalidInput("shared_mask: non-finite coordinates");
  std::vector<bool> mask(coords.cols());
  for (std::size_t u = 0; u < coords.cols(); ++u) {
    std::size_t positive = 0;
    std::size_t negative = 0;
    std::size_t zero = 0;
    for (std::size_t i = 0; i < coords.rows(); ++i) {
      const double p = coords(i, u);
      if (p > 0.0) ++positive;
      else if (p < 0.0) ++negative;
      else ++zero;
    }
    if (rule == MaskRule::kAllAgree) {
      mask[u] = positive == 0 || negative == 0;
    } else {
      // Sign of the product; avoids under/overflow of the numeric product.
      mask[u] = zero > 0 || negative % 2 == 0;
    }
  }
  return mask;
}

bool GdodDecomposition::mask_empty() const {
  return std::none_of(mask.begin(), mask.end(), [](bool b) { return b; });
}

namespace {

constexpr double kMassEpsilon = 1e-300;

// Shared/conflict split. weigh(coords, mask) returns a K x r matrix of
// multipliers in [0, 1]: w * p_i[u] goes to g_i^sh, the rest to g_i^con.
template <class WeighFn>
GdodDecomposition decompose(const GroupedBundle& bundle, const BasisMethod& method, Rng& rng,
                            double rel_cutoff, MaskRule rule, WeighFn weigh) {
  bundle.validate();
  const std::size_t k = bundle.tasks();
  const std::size_t d = bundle.dim();

  GdodDecomposition out;
  out.basis = build_basis(bundle.stacked(), method, rng, rel_cutoff);
  const Matrix means = bundle.task_means();
  const std::size_t r = out.basis.rank();

  out.coords = Matrix(k, r);
  for (std::size_t i = 0; i < k; ++i) {
    const Vector p = project(out.basis, means.row(i));
    std::copy(p.begin(), p.end(), out.coords.row(i).begin());
  }
  out.mask = shared_mask(out.coords, rule);
  const Matrix multipliers = weigh(out.coords, out.mask);

  out.shared = Matrix(k, d);
  out.conflict = Matrix(k, d);
  out.update = Vector(d, 0.0);
  double shared_mass = 0.0;
  double projected_mass = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    Vector p_shared(r);
    Vector p_conflict(r);
    for (std::size_t u = 0; u < r; ++u) {
      const double p = out.coords(i, u);
      p_shared[u] = multipliers(i, u) * p;
      p_conflict[u] = p - p_shared[u];
    }
    const Vector g_shared = reconstruct(out.basis, p_shared);
    const Vector g_conflict = reconstruct(out.basis, p_conflict);
    std::copy(g_shared.begin(), g_shared.end(), out.shared.row(i).begin());
    std::copy(g_conflict.begin(), g_conflict.end(), out.conflict.row(i).begin());
    axpy(bundle.task_weights[i], g_shared, out.update);
    // Orthonormal basis: reconstruction norms equal coordinate norms.
    shared_mass += squared_norm(p_shared);
    projected_mass += squared_norm(out.coords.row(i));
  }
  out.shared_mass_fraction = shared_mass / std::max(kMassEpsilon, projected_mass);
  return out;
}

}  // namespace

GdodDecomposition gdod_combine(const GroupedBundle& bundle, const BasisMethod& method,
                               MaskRule rule, Rng& rng, double rel_cutoff) {
  return decompose(bundle, method, rng, rel_cutoff, rule,
                   [](const Matrix& coords, const std::vector<bool>& mask) {
                     Matrix w(coords.rows(), coords.cols());
                     for (std::size_t i = 0; i < coords.rows(); ++i)
                       for (std::size_t u = 0; u < coords.cols(); ++u) w(i, u) = mask[u] ? 1.0 : 0.0;
                     return w;
                   });
}

Matrix sign_majority_weights(const Matrix& coords) {
  const std::size_t k = coords.rows();
  Matrix weights(k, coords.cols());
  for (std::size_t u = 0; u < coords.cols(); ++u) {
    std::size_t a = 0;
    for (std::size_t i = 0; i < k; ++i)
      if (coords(i, u) >= 0.0) ++a;
    const std::size_t b = k - a;
    const bool plus_wins = a >= b;
    const double w = static_cast<double>(plus_wins ? a - b : b - a) / static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i) {
      const bool in_plus = coords(i, u) >= 0.0;
      weights(i, u) = in_plus == plus_wins ? w : 0.0;
    }
  }
  return weights;
}

GdodDecomposition weighted_gdod_combine(const GroupedBundle& bundle, const BasisMethod& method,
                                        Rng& rng, double rel_cutoff) {
  // The reported mask marks coordinates that carry any weight.
  GdodDecomposition out = decompose(
      bundle, method, rng, rel_cutoff, MaskRule::kAllAgree,
      [](const Matrix& coords, const std::vector<bool>&) { return sign_majority_weights(coords); });
  const Matrix weights = sign_majority_weights(out.coords);
  for (std::size_t u = 0; u < weights.cols(); ++u) {
    bool any = false;
    for (std::size_t i = 0; i < weights.rows(); ++i) any = any || weights(i, u) > 0.0;
    out.mask[u] = any;
  }
  return out;
}

Vector sum_combine(const Matrix& means, std::span<const double> weights) {
  if (weights.size() != means.rows()) throw InvalidInput("sum_combine: weight count != K");
  Vector out(means.cols(), 0.0);
  for (std::size_t i = 0; i < means.rows(); ++i) axpy(weights[i], means.row(i), out);
  return out;
}

Vector pcgrad_combine(const Matrix& means, std::span<const double> weights, Rng& rng) {
  const std::size_t k = means.rows();
  if (k == 0) throw InvalidInput("pcgrad_combine: need at least one task");
  if (weights.size() != k) throw InvalidInput("pcgrad_combine: weight count != K");
  Vector out(means.cols(), 0.0);
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < k; ++i) {
    Vector g(means.row(i).begin(), means.row(i).end());
    others.clear();
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) others.push_back(j);
    rng.shuffle(std::span<std::size_t>(others));
    for (std::size_t j : others) {
      const auto other = means.row(j);
      const double other_sq = squared_norm(other);
      if (other_sq == 0.0) continue;
      const double overlap = dot(g, other);
      if (overlap < 0.0) axpy(-overlap / other_sq, other, g);
    }
    axpy(weights[i], g, out);
  }
  return out;
}

namespace {

Matrix scaled_rows(const Matrix& means, std::span<const double> weights, const char* op) {
  if (means.rows() == 0) throw InvalidInput(std::string(op) + ": need at least one task");
  if (weights.size() != means.rows()) throw InvalidInput(std::string(op) + ": weight count != K");
  Matrix out = means;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& x : out.row(i)) x *= weights[i];
  return out;
}

}  // namespace

Vector mgda_combine(const Matrix& means, std::span<const double> weights, std::size_t fw_iters) {
  const Matrix g = scaled_rows(means, weights, "mgda_combine");
  if (g.rows() == 2) return min_norm_point_2(g.row(0), g.row(1)).point;
  return frank_wolfe_min_norm(g, fw_iters).point;
}

CagradSolution cagrad_solve(const Matrix& means, std::span<const double> weights, double c,
                            std::size_t iters) {
  if (!(c >= 0.0 && c < 1.0)) throw InvalidInput("cagrad_combine: c must lie in [0, 1)");
  const Matrix g = scaled_rows(means, weights, "cagrad_combine");
  const std::size_t k = g.rows();

  Vector g0(g.cols(), 0.0);
  for (std::size_t i = 0; i < k; ++i) axpy(1.0 / static_cast<double>(k), g.row(i), g0);
  const double radius = c * norm(g0);
  Vector w(k, 1.0 / static_cast<double>(k));
  if (radius == 0.0) return {g0, w};

  // Dual: min_w F(w) = g_w . g0 + radius * ||g_w||, g_w = sum_i w_i g_i.
  const Matrix gram = matmul_transposed(g, g);
  const Vector gram_g0 = matvec(g, g0);  // (g_i . g0)_i
  const double lambda_max = std::max(symmetric_eigen(gram).values.front(), 0.0);
  const double tiny = 1e-300;
  auto objective = [&](const Vector& weights_) {
    return dot(weights_, gram_g0) + radius * std::sqrt(std::max(0.0, dot(weights_, matvec(gram, weights_))));
  };

  Vector best = w;
  double best_value = objective(w);
  for (std::size_t it = 0; it < iters && lambda_max > 0.0; ++it) {
    const Vector gram_w = matvec(gram, w);
    const double gw_norm = std::sqrt(std::max(0.0, dot(w, gram_w)));
    if (gw_norm <= tiny) break;
    // Curvature of F is bounded by radius * lambda_max / ||g_w|| near w.
    const double lipschitz = radius * lambda_max / gw_norm;
    Vector step(k);
    for (std::size_t i = 0; i < k; ++i)
      step[i] = w[i] - (gram_g0[i] + radius * gram_w[i] / gw_norm) / lipschitz;
    w = project_to_simplex(step);
    const double value = objective(w);
    if (value < best_value) {
      best_value = value;
      best = w;
    }
  }

  const Vector gw = vecmat(best, g);
  const double gw_norm = norm(gw);
  Vector d = g0;
  if (gw_norm > 0.0) axpy(radius / gw_norm, gw, d);
  return {std::move(d), std::move(best)};
}

Vector cagrad_combine(const Matrix& means, std::span<const double> weights, double c,
                      std::size_t iters) {
  return cagrad_solve(means, weights, c, iters).direction;
}

std::string combiner_name(CombinerKind kind) {
  switch (kind) {
    case CombinerKind::kGdod: return "gdod";
    case CombinerKind::kWeightedGdod: return "wgdod";
    case CombinerKind::kPcGrad: return "pcgrad";
    case CombinerKind::kMgda: return "mgda";
    case CombinerKind::kCaGrad: return "cagrad";
    case CombinerKind::kSum: return "sum";
  }
  return "unknown";
}

CombinerKind parse_combiner(std::string_view name) {
  for (auto kind : {CombinerKind::kGdod, CombinerKind::kWeightedGdod, CombinerKind::kPcGrad,
                    CombinerKind::kMgda, CombinerKind::kCaGrad, CombinerKind::kSum}) {
    if (name == combiner_name(kind)) return kind;
  }
  throw InvalidInput("unknown combiner '" + std::string(name) + "'");
}

CombineOutcome combine(const GradientBundle& bundle, const CombinerConfig& config, Rng& rng) {
  bundle.validate();
  CombineOutcome out;
  switch (config.kind) {
    case CombinerKind::kGdod:
    case CombinerKind::kWeightedGdod: {
      const std::size_t groups = std::min(config.groups, bundle.examples());
      const GroupedBundle grouped = group_gradients(bundle, groups, rng);
      const GdodDecomposition dec =
          config.kind == CombinerKind::kGdod
              ? gdod_combine(grouped, config.basis, config.mask_rule, rng, config.rel_cutoff)
              : weighted_gdod_combine(grouped, config.basis, rng, config.rel_cutoff);
      out.update = dec.update;
      out.shared_mass_fraction = dec.shared_mass_fraction;
      out.subspace_rank = dec.basis.rank();
      out.empty_mask = dec.mask_empty();
      return out;
    }
    case CombinerKind::kPcGrad:
      out.update = pcgrad_combine(bundle.task_means(), bundle.task_weights, rng);
      return out;
    case CombinerKind::kMgda:
      out.update = mgda_combine(bundle.task_means(), bundle.task_weights, config.fw_iters);
      return out;
    case CombinerKind::kCaGrad:
      out.update = cagrad_combine(bundle.task_means(), bundle.task_weights, config.cagrad_c,
                                  config.cagrad_iters);
      return out;
    case CombinerKind::kSum:
      out.update = sum_combine(bundle.task_means(), bundle.task_weights);
      return out;
  }
  return out;
}

}  // namespace gdod
