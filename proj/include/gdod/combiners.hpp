#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdod/decomposition.hpp"
#include "gdod/numerics.hpp"
#include "gdod/rng.hpp"

namespace gdod {

/// Per-example gradients of the shared parameters, one m x D matrix per task.
struct GradientBundle {
  std::vector<Matrix> per_example;
  Vector task_weights;  // one per task, nonnegative

  std::size_t tasks() const { return per_example.size(); }
  std::size_t examples() const { return per_example.empty() ? 0 : per_example[0].rows(); }
  std::size_t dim() const { return per_example.empty() ? 0 : per_example[0].cols(); }

  // Throws InvalidInput on shape, weight or finiteness violations.
  void validate() const;
  // K x D, row i = mean of task i's per-example rows.
  Matrix task_means() const;
};

/// Average-pooled gradients: per task, G rows, each the mean of a disjoint
/// chunk of examples. The chunking is shared across tasks.
struct GroupedBundle {
  std::vector<Matrix> per_group;
  std::vector<std::size_t> group_sizes;
  Vector task_weights;

  std::size_t tasks() const { return per_group.size(); }
  std::size_t groups() const { return group_sizes.size(); }
  std::size_t dim() const { return per_group.empty() ? 0 : per_group[0].cols(); }

  void validate() const;
  // Group-size weighted, so it equals the per-example batch mean.
  Matrix task_means() const;
  // (K*G) x D, task-major then group.
  Matrix stacked() const;
};

GroupedBundle group_gradients(const GradientBundle& bundle, std::size_t groups, Rng& rng);
// Same, with a caller-chosen permutation of example indices.
GroupedBundle group_gradients(const GradientBundle& bundle, std::size_t groups,
                              std::span<const std::size_t> permutation);

enum class MaskRule {
  kAllAgree,        // no two tasks have strictly opposite signs
  kLiteralProduct,  // product of all task coordinates >= 0
};

std::string mask_rule_name(MaskRule rule);
MaskRule parse_mask_rule(std::string_view name);

// coords: K x r projections. Returns one flag per basis coordinate; true means
// the coordinate is shared.
std::vector<bool> shared_mask(const Matrix& coords, MaskRule rule);

struct GdodDecomposition {
  OrthogonalBasis basis;
  Matrix coords;             // K x r, row i = project(basis, g_i)
  std::vector<bool> mask;    // r flags, true = shared
  Matrix shared;             // K x D, g_i^sh
  Matrix conflict;           // K x D, g_i^con
  Vector update;             // sum_i w_i g_i^sh
  double shared_mass_fraction = 0.0;

  bool mask_empty() const;
};

GdodDecomposition gdod_combine(const GroupedBundle& bundle, const BasisMethod& method,
                               MaskRule rule, Rng& rng,
                               double rel_cutoff = kDefaultRelCutoff);

// Per-coordinate task weights for the weighted variant. For each coordinate,
// tasks split by sign into S+ (p >= 0, a members) and S- (b members); the
// majority side gets |a - b| / K, the minority side 0.
Matrix sign_majority_weights(const Matrix& coords);

GdodDecomposition weighted_gdod_combine(const GroupedBundle& bundle, const BasisMethod& method,
                                        Rng& rng, double rel_cutoff = kDefaultRelCutoff);

// means: K x D task gradients; weights: K task weights.
Vector pcgrad_combine(const Matrix& means, std::span<const double> weights, Rng& rng);

inline constexpr std::size_t kDefaultFrankWolfeIters = 500;
Vector mgda_combine(const Matrix& means, std::span<const double> weights,
                    std::size_t fw_iters = kDefaultFrankWolfeIters);

inline constexpr std::size_t kDefaultCagradIters = 50;

struct CagradSolution {
  Vector direction;
  Vector dual_weights;  // simplex weights of the dual problem
};

// c in [0, 1). Weighted task gradients w_i g_i play the role of g_i; g_0 is
// their mean.
CagradSolution cagrad_solve(const Matrix& means, std::span<const double> weights, double c,
                            std::size_t iters = kDefaultCagradIters);
Vector cagrad_combine(const Matrix& means, std::span<const double> weights, double c,
                      std::size_t iters = kDefaultCagradIters);

Vector sum_combine(const Matrix& means, std::span<const double> weights);

enum class CombinerKind { kGdod, kWeightedGdod, kPcGrad, kMgda, kCaGrad, kSum };

// "gdod" | "wgdod" | "pcgrad" | "mgda" | "cagrad" | "sum"
std::string combiner_name(CombinerKind kind);
CombinerKind parse_combiner(std::string_view name);

struct CombinerConfig {
  CombinerKind kind = CombinerKind::kGdod;
  BasisMethod basis = SvdBasis{};
  MaskRule mask_rule = MaskRule::kAllAgree;
  std::size_t groups = 16;
  double cagrad_c = 0.5;
  std::size_t cagrad_iters = kDefaultCagradIters;
  std::size_t fw_iters = kDefaultFrankWolfeIters;
  double rel_cutoff = kDefaultRelCutoff;
};

struct CombineOutcome {
  Vector update;
  // GDOD variants only.
  std::optional<double> shared_mass_fraction;
  std::size_t subspace_rank = 0;
  bool empty_mask = false;
};

// Dispatch on config.kind. GDOD variants pool into min(groups, m) groups with
// a fresh permutation drawn from rng.
CombineOutcome combine(const GradientBundle& bundle, const CombinerConfig& config, Rng& rng);

}  // namespace gdod
