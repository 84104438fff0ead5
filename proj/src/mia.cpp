#include "cdu/mia.hpp"

#include <cmath>
#include <fstream>

#include "cdu/error.hpp"
#include "cdu/metrics.hpp"
#include "cdu/nn.hpp"

namespace cdu {

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::forget_test: return "forget_test";
    case Provenance::nm_train_test: return "nm_train_test";
    case Provenance::nm_eval_test: return "nm_eval_test";
    case Provenance::other: break;
  }
  return "other";
}

FeatureVector features_from_prediction(double probability, std::uint8_t label) {
  if (!(probability > 0.0 && probability < 1.0)) throw ValidationError("prediction must lie in (0, 1)");
  if (label > 1) throw ValidationError("label must be 0 or 1");
  const double y = label;
  return {probability, y, bce_loss(probability, label), std::abs(y - probability), probability * (1.0 - probability)};
}

FeatureBatch extract_features(const CDModel& model, std::span<const ResponseRecord> records, Provenance provenance,
                              std::string model_tag) {
  if (records.empty()) throw ValidationError("cannot extract attack features from an empty record set");
  FeatureBatch batch;
  batch.provenance = provenance;
  batch.model_tag = std::move(model_tag);
  batch.features.reserve(records.size());
  for (const auto& r : records) batch.features.push_back(features_from_prediction(model.predict(r.student, r.item), r.score));
  return batch;
}

AttackClassifier::AttackClassifier(FeatureVector weights, double bias, FeatureVector mean, FeatureVector stddev)
    : weights_(weights), bias_(bias), mean_(mean), stddev_(stddev) {
  for (double s : stddev_) {
    if (!(s > 0.0)) throw ValidationError("standardization stddev must be positive");
  }
}

double AttackClassifier::score(const FeatureVector& x) const {
  double z = bias_;
  for (std::size_t k = 0; k < kFeatureCount; ++k) z += weights_[k] * (x[k] - mean_[k]) / stddev_[k];
  return sigmoid(z);
}

std::vector<double> AttackClassifier::score(std::span<const FeatureVector> xs) const {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(score(x));
  return out;
}

nlohmann::json AttackClassifier::to_json() const {
  return {{"weights", weights_}, {"bias", bias_}, {"mean", mean_}, {"stddev", stddev_}};
}

AttackClassifier train_attacker(const FeatureBatch& positives, const FeatureBatch& negatives, std::uint64_t /*seed*/,
                                const AttackTrainConfig& config) {
  if (positives.features.empty() || negatives.features.empty()) {
    throw ValidationError("attacker training needs both members and non-members");
  }
  if (positives.provenance == Provenance::nm_eval_test || negatives.provenance == Provenance::nm_eval_test) {
    throw ValidationError("nm_eval features must never reach attacker training");
  }
  if (!(config.lr > 0.0) || !(config.l2 >= 0.0)) throw ValidationError("invalid attacker training config");

  const std::size_t n = positives.features.size() + negatives.features.size();
  std::vector<FeatureVector> x;
  std::vector<double> y;
  x.reserve(n);
  y.reserve(n);
  for (const auto& f : positives.features) {
    x.push_back(f);
    y.push_back(1.0);
  }
  for (const auto& f : negatives.features) {
    x.push_back(f);
    y.push_back(0.0);
  }

  FeatureVector mean{};
  FeatureVector stddev{};
  for (const auto& f : x) {
    for (std::size_t k = 0; k < kFeatureCount; ++k) mean[k] += f[k];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  for (const auto& f : x) {
    for (std::size_t k = 0; k < kFeatureCount; ++k) stddev[k] += (f[k] - mean[k]) * (f[k] - mean[k]);
  }
  for (auto& s : stddev) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 1e-12)) s = 1.0;
  }
  for (auto& f : x) {
    for (std::size_t k = 0; k < kFeatureCount; ++k) f[k] = (f[k] - mean[k]) / stddev[k];
  }

  FeatureVector w{};
  double b = 0.0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    FeatureVector gw{};
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = b;
      for (std::size_t k = 0; k < kFeatureCount; ++k) z += w[k] * x[i][k];
      const double err = sigmoid(z) - y[i];
      for (std::size_t k = 0; k < kFeatureCount; ++k) gw[k] += err * x[i][k];
      gb += err;
    }
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      w[k] -= config.lr * (gw[k] / static_cast<double>(n) + config.l2 * w[k]);
    }
    b -= config.lr * gb / static_cast<double>(n);
  }
  return AttackClassifier(w, b, mean, stddev);
}

nlohmann::json MIAReport::to_json() const {
  return {{"model", model_tag},
          {"mia_auc", mia_auc},
          {"mia_acc", mia_acc},
          {"n_positive", n_positive},
          {"n_negative", n_negative}};
}

MIAReport evaluate_attack(const AttackClassifier& classifier, const FeatureBatch& members,
                          const FeatureBatch& non_members) {
  if (members.features.empty() || non_members.features.empty()) {
    throw ValidationError("attack evaluation needs both members and non-members");
  }
  std::vector<double> scores = classifier.score(members.features);
  const std::vector<double> neg = classifier.score(non_members.features);
  scores.insert(scores.end(), neg.begin(), neg.end());
  std::vector<int> labels(members.features.size(), 1);
  labels.resize(scores.size(), 0);

  MIAReport report;
  report.mia_auc = auc(scores, labels);
  report.mia_acc = acc(scores, labels, 0.5);
  report.n_positive = members.features.size();
  report.n_negative = non_members.features.size();
  report.model_tag = members.model_tag;
  return report;
}

MIAReport evaluate_attack(const AttackClassifier& classifier, const CDModel& model,
                          std::span<const ResponseRecord> forget_test, std::span<const ResponseRecord> nm_eval_test,
                          std::string model_tag) {
  if (forget_test.empty() || nm_eval_test.empty()) {
    throw ValidationError("attack evaluation needs nonempty forget and nm_eval test sets");
  }
  return evaluate_attack(classifier, extract_features(model, forget_test, Provenance::forget_test, model_tag),
                         extract_features(model, nm_eval_test, Provenance::nm_eval_test, model_tag));
}

void write_attack_audit_csv(const std::filesystem::path& path, const AttackClassifier& classifier,
                            const FeatureBatch& members, const FeatureBatch& non_members) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "p,y,bce,abs_err,p_var,label,score\n";
  for (int label : {1, 0}) {
    const auto& batch = label == 1 ? members : non_members;
    for (const auto& f : batch.features) {
      for (double v : f) out << v << ',';
      out << label << ',' << classifier.score(f) << '\n';
    }
  }
}

}  // namespace cdu
