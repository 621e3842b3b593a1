#include "gdod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gdod/errors.hpp"
#include "gdod/model.hpp"

namespace gdod {

namespace {

void check_lengths(std::span<const double> labels, std::span<const double> values) {
  if (labels.size() != values.size()) throw InvalidInput("metric: length mismatch");
  for (double y : labels)
    if (y != 0.0 && y != 1.0) throw InvalidInput("metric: labels must be 0 or 1");
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const double> labels) {
  const auto positives =
      static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1.0));
  return {positives, labels.size() - positives};
}

}  // namespace

double auc(std::span<const double> labels, std::span<const double> scores) {
  check_lengths(labels, scores);
  const auto [positives, negatives] = class_counts(labels);
  if (positives == 0 || negatives == 0) throw UndefinedMetric("auc: need both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based average ranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t tied_positives = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1.0) ++tied_positives;
      ++j;
    }
    const double average_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += average_rank * static_cast<double>(tied_positives);
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double n = static_cast<double>(negatives);
  return (rank_sum - 0.5 * p * (p + 1.0)) / (p * n);
}

double auc_pairwise(std::span<const double> labels, std::span<const double> scores) {
  check_lengths(labels, scores);
  const auto [positives, negatives] = class_counts(labels);
  if (positives == 0 || negatives == 0) throw UndefinedMetric("auc: need both classes");
  double credit = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1.0) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0.0) continue;
      if (scores[i] > scores[j]) credit += 1.0;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  return credit / (static_cast<double>(positives) * static_cast<double>(negatives));
}

double logloss(std::span<const double> labels, std::span<const double> probs) {
  check_lengths(labels, probs);
  if (labels.empty()) throw UndefinedMetric("logloss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += binary_cross_entropy(labels[i], probs[i]);
  return total / static_cast<double>(labels.size());
}

bool auc_rank_equivalence_check(std::span<const double> labels, std::span<const double> scores) {
  try {
    return std::abs(auc(labels, scores) - auc_pairwise(labels, scores)) <= 1e-12;
  } catch (const UndefinedMetric&) {
    return false;
  }
}

TaskMetrics evaluate_task(std::span<const double> labels, std::span<const double> probs) {
  return {auc(labels, probs), logloss(labels, probs), labels.size()};
}

}  // namespace gdod
