#pragma once

#include <span>
#include <vector>

namespace cdu {

struct ScoredLabels {
  std::vector<double> scores;
  std::vector<int> labels;
};

/// Mann-Whitney AUC: (#(pos > neg) + 0.5 * #(pos == neg)) / (n_pos * n_neg),
/// computed by sorting. Throws ValidationError unless both labels occur.
double auc(std::span<const double> scores, std::span<const int> labels);
inline double auc(const ScoredLabels& d) { return auc(d.scores, d.labels); }

/// Fraction of examples with (score >= threshold) == label.
double acc(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);
inline double acc(const ScoredLabels& d, double threshold = 0.5) { return acc(d.scores, d.labels, threshold); }

/// Relative time reduction rate in percent: (1 - t_unlearn / t_retrain) * 100.
double rtrr(double t_unlearn, double t_retrain);

}  // namespace cdu
