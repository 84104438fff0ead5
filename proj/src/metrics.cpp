#include "cdu/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

#include "cdu/error.hpp"

namespace cdu {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney numerator, kept integral so ties stay exact.
  std::uint64_t twice_wins = 0;
  std::uint64_t neg_below = 0;
  std::uint64_t n_pos = 0;
  std::uint64_t n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos_here = 0;
    std::uint64_t neg_here = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) {
        ++pos_here;
      } else if (labels[order[j]] == 0) {
        ++neg_here;
      } else {
        throw ValidationError("auc: labels must be 0 or 1");
      }
      ++j;
    }
    twice_wins += 2 * pos_here * neg_below + pos_here * neg_here;
    neg_below += neg_here;
    n_pos += pos_here;
    n_neg += neg_here;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) throw ValidationError("auc needs at least one positive and one negative");
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double acc(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) throw ValidationError("acc: scores and labels differ in length");
  if (scores.empty()) throw ValidationError("acc of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int predicted = scores[i] >= threshold ? 1 : 0;
    hits += predicted == labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double rtrr(double t_unlearn, double t_retrain) {
  if (!(t_retrain > 0.0)) throw ValidationError("rtrr: retrain time must be positive");
  return (1.0 - t_unlearn / t_retrain) * 100.0;
}

}  // namespace cdu
