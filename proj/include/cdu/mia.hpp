#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cdu/data.hpp"
#include "cdu/model.hpp"

namespace cdu {

inline constexpr std::size_t kFeatureCount = 5;

/// [p, y, bce(p, y), |y - p|, p(1 - p)]
using FeatureVector = std::array<double, kFeatureCount>;

/// Which record set a feature batch was extracted from.
enum class Provenance { forget_test, nm_train_test, nm_eval_test, other };

std::string_view to_string(Provenance provenance);

struct FeatureBatch {
  std::vector<FeatureVector> features;
  Provenance provenance = Provenance::other;
  /// Tag of the model the features came from ("m_orig", "m_retrain", ...).
  std::string model_tag;
};

FeatureVector features_from_prediction(double probability, std::uint8_t label);

/// One feature vector per record, dropout off. Throws on empty input.
FeatureBatch extract_features(const CDModel& model, std::span<const ResponseRecord> records, Provenance provenance,
                              std::string model_tag = {});

/// Standardized logistic regression over FeatureVector.
class AttackClassifier {
 public:
  AttackClassifier(FeatureVector weights, double bias, FeatureVector mean, FeatureVector stddev);

  /// Membership score in (0, 1).
  double score(const FeatureVector& x) const;
  std::vector<double> score(std::span<const FeatureVector> xs) const;

  const FeatureVector& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }
  const FeatureVector& mean() const noexcept { return mean_; }
  const FeatureVector& stddev() const noexcept { return stddev_; }

  nlohmann::json to_json() const;

 private:
  FeatureVector weights_;
  double bias_;
  FeatureVector mean_;
  FeatureVector stddev_;
};

struct AttackTrainConfig {
  double lr = 0.1;
  std::size_t iterations = 2000;
  double l2 = 1e-4;
};

/// Fits the attacker on members (`positives`, label 1) versus non-members
/// (`negatives`, label 0) by full-batch gradient descent on standardized
/// features. The batches must come from D_f_test and D_nm_train_test; a batch
/// tagged nm_eval_test is rejected. Zero-variance features get stddev 1.
/// Deterministic: the seed is accepted for interface stability and recorded,
/// but full-batch descent from zero weights draws no randomness.
AttackClassifier train_attacker(const FeatureBatch& positives, const FeatureBatch& negatives, std::uint64_t seed,
                                const AttackTrainConfig& config = {});

struct MIAReport {
  double mia_auc = 0.0;
  double mia_acc = 0.0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::string model_tag;

  nlohmann::json to_json() const;
};

/// Attacker scores on features of `model` over D_f_test (label 1) and
/// D_nm_eval_test (label 0).
MIAReport evaluate_attack(const AttackClassifier& classifier, const CDModel& model,
                          std::span<const ResponseRecord> forget_test, std::span<const ResponseRecord> nm_eval_test,
                          std::string model_tag = {});

/// Scores already-extracted batches. Same contract as evaluate_attack.
MIAReport evaluate_attack(const AttackClassifier& classifier, const FeatureBatch& members,
                          const FeatureBatch& non_members);

/// Audit dump: `p,y,bce,abs_err,p_var,label,score` per example.
void write_attack_audit_csv(const std::filesystem::path& path, const AttackClassifier& classifier,
                            const FeatureBatch& members, const FeatureBatch& non_members);

}  // namespace cdu
