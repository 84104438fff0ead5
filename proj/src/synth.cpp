#include "cdu/synth.hpp"

#include <array>
#include <string_view>
#include <vector>

#include "cdu/error.hpp"
#include "cdu/nn.hpp"
#include "cdu/rng.hpp"

namespace cdu {

QMatrix fraction_subtraction_qmatrix() {
  static constexpr std::array<std::string_view, 20> kRows{
      "00010110", "00010010", "00010010", "01101010", "01010011", "00000010", "11000010",
      "00000010", "01000000", "01001011", "01001010", "00000011", "01011010", "01000010",
      "10000010", "01000010", "01001010", "01001110", "11101010", "01101010"};
  std::vector<std::vector<int>> rows;
  for (auto r : kRows) {
    std::vector<int> row;
    for (char c : r) row.push_back(c - '0');
    rows.push_back(std::move(row));
  }
  return QMatrix(rows);
}

QMatrix random_qmatrix(std::size_t items, std::size_t kcs, std::size_t max_kcs_per_item, std::uint64_t seed) {
  if (items == 0 || kcs == 0) throw ValidationError("Q-matrix needs items and KCs");
  if (max_kcs_per_item == 0 || max_kcs_per_item > kcs) throw ValidationError("invalid max_kcs_per_item");
  Rng rng(seed);
  std::vector<int> order(kcs);
  std::vector<std::vector<int>> rows(items, std::vector<int>(kcs, 0));
  for (auto& row : rows) {
    for (std::size_t k = 0; k < kcs; ++k) order[k] = static_cast<int>(k);
    rng.shuffle(std::span(order));
    const std::size_t n = 1 + rng.below(max_kcs_per_item);
    for (std::size_t k = 0; k < n; ++k) row[order[k]] = 1;
  }
  return QMatrix(rows);
}

Dataset generate_dina(const QMatrix& q, const DinaConfig& config) {
  if (q.empty()) throw ValidationError("DINA generator needs a Q-matrix");
  if (config.n_students == 0) throw ValidationError("DINA generator needs students");
  if (!(config.density > 0.0 && config.density <= 1.0)) throw ValidationError("density must lie in (0, 1]");
  Rng rng(config.seed);

  std::vector<double> skill_difficulty(q.kcs());
  for (auto& b : skill_difficulty) b = rng.uniform(config.skill_difficulty_min, config.skill_difficulty_max);
  std::vector<double> slip(q.items());
  std::vector<double> guess(q.items());
  for (std::size_t j = 0; j < q.items(); ++j) {
    slip[j] = rng.uniform(config.slip_min, config.slip_max);
    guess[j] = rng.uniform(config.guess_min, config.guess_max);
  }

  std::vector<ResponseRecord> records;
  std::vector<std::uint8_t> mastered(q.kcs());
  for (std::size_t s = 0; s < config.n_students; ++s) {
    const double theta = rng.normal();
    for (std::size_t k = 0; k < q.kcs(); ++k) {
      mastered[k] = rng.bernoulli(sigmoid(config.ability_slope * theta - skill_difficulty[k])) ? 1 : 0;
    }
    for (std::size_t j = 0; j < q.items(); ++j) {
      if (config.density < 1.0 && !rng.bernoulli(config.density)) continue;
      bool ready = true;
      for (std::size_t k = 0; k < q.kcs(); ++k) ready = ready && (q.at(j, k) == 0 || mastered[k] == 1);
      const double p = ready ? 1.0 - slip[j] : guess[j];
      records.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(j),
                         static_cast<std::uint8_t>(rng.bernoulli(p) ? 1 : 0)});
    }
  }
  return make_dataset(std::move(records), config.n_students, q);
}

}  // namespace cdu
