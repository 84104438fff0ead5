#pragma once

#include <cstddef>
#include <cstdint>

#include "cdu/data.hpp"

namespace cdu {

/// The classic 20-item x 8-skill fraction-subtraction Q-matrix.
QMatrix fraction_subtraction_qmatrix();

/// Random binary Q-matrix with 1 to `max_kcs_per_item` skills per item.
QMatrix random_qmatrix(std::size_t items, std::size_t kcs, std::size_t max_kcs_per_item, std::uint64_t seed);

/// Higher-order DINA response generator. Each student draws ability
/// theta ~ N(0, 1) and masters skill k with probability
/// sigmoid(ability_slope * theta - b_k), b_k ~ U(skill_difficulty_min,
/// skill_difficulty_max). Item j is answered
/// correctly with probability 1 - slip_j when every required skill is
/// mastered and guess_j otherwise.
struct DinaConfig {
  std::size_t n_students = 536;
  double ability_slope = 1.5;
  double skill_difficulty_min = -2.5;
  double skill_difficulty_max = -0.5;
  double slip_min = 0.05;
  double slip_max = 0.2;
  double guess_min = 0.05;
  double guess_max = 0.25;
  /// Fraction of (student, item) pairs observed; 1 gives a complete matrix.
  double density = 1.0;
  std::uint64_t seed = 0;
};

/// Records are emitted student-major, item-minor. Ids are dense.
Dataset generate_dina(const QMatrix& q, const DinaConfig& config);

}  // namespace cdu
