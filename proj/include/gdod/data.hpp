#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>

#include "gdod/numerics.hpp"

namespace gdod {

struct MultiTaskDataset {
  Matrix features;  // N x F
  Matrix labels;    // N x K, entries 0 or 1
  std::string source;

  std::size_t size() const { return features.rows(); }
  std::size_t feature_count() const { return features.cols(); }
  std::size_t task_count() const { return labels.cols(); }

  MultiTaskDataset subset(std::span<const std::size_t> rows) const;
};

/// Synthetic binary multi-task data with controllable task relatedness.
///
/// Task directions u_1..u_K are unit vectors with pairwise cosine
/// `correlation`. Features are i.i.d. standard normal, and the label of task k
/// is Bernoulli(sigmoid(logit_scale * (z + nonlinearity * sin(3 z)))) with
/// z = u_k . x.
struct SyntheticSpec {
  std::size_t samples = 10000;
  std::size_t features = 16;
  std::size_t tasks = 2;
  double correlation = 0.2;
  double nonlinearity = 0.5;
  double logit_scale = 4.0;
  std::uint64_t seed = 1;
};

// Throws InvalidInput when the equicorrelation matrix is not PSD, when
// features < tasks, or on degenerate sizes.
MultiTaskDataset generate_synthetic(const SyntheticSpec& spec);

// Unit task directions (K x F) used by generate_synthetic.
Matrix task_directions(const SyntheticSpec& spec);

// Header must name f0..f{F-1} and y0..y{K-1} (any order, extra columns
// ignored). SchemaError names a missing column; ValueError reports the data
// row (0-based) of a bad cell.
MultiTaskDataset load_csv(const std::filesystem::path& path, std::size_t features,
                          std::size_t tasks);

// Writes f0..,y0.. with shortest round-trip number formatting.
void write_csv(const MultiTaskDataset& dataset, const std::filesystem::path& path);

// Seeded permutation split; test part gets round(N * test_fraction) rows,
// clamped so both sides are non-empty.
std::pair<MultiTaskDataset, MultiTaskDataset> split(const MultiTaskDataset& dataset,
                                                    double test_fraction, std::uint64_t seed);

}  // namespace gdod
