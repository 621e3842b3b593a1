#pragma once

#include <cstddef>
#include <span>

namespace gdod {

struct TaskMetrics {
  double auc = 0.0;
  double logloss = 0.0;
  std::size_t n = 0;
};

// Mann-Whitney AUC from average ranks, O(n log n). Ties between a positive and
// a negative count one half. Throws UndefinedMetric unless both classes occur.
double auc(std::span<const double> labels, std::span<const double> scores);

// Same statistic by direct enumeration of positive/negative pairs, O(P N).
double auc_pairwise(std::span<const double> labels, std::span<const double> scores);

// -mean(y ln p + (1 - y) ln(1 - p)), p clamped 1e-12 away from {0, 1}.
double logloss(std::span<const double> labels, std::span<const double> probs);

// True iff the rank-based and pairwise AUC agree within 1e-12. False when the
// metric is undefined.
bool auc_rank_equivalence_check(std::span<const double> labels, std::span<const double> scores);

TaskMetrics evaluate_task(std::span<const double> labels, std::span<const double> probs);

}  // namespace gdod
