#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cdu/checkpoint.hpp"
#include "cdu/data.hpp"
#include "cdu/nn.hpp"
#include "cdu/rng.hpp"

namespace cdu {

enum class Architecture { decoupled, neuralcdm };

std::string_view to_string(Architecture arch);
/// Throws ValidationError for an unknown name.
Architecture architecture_from_string(std::string_view name);

struct CDArchConfig {
  Architecture arch = Architecture::decoupled;
  /// Width of the student/exercise/KC embeddings (decoupled only).
  std::size_t embed_dim = 16;
  std::vector<std::size_t> ffn_hidden{64, 32};
  /// Train-time dropout on hidden FFN activations.
  double dropout = 0.2;
  std::size_t n_students = 0;
  std::size_t n_items = 0;
  std::size_t n_kcs = 0;

  void validate() const;
  /// Copy with the student/item/KC counts taken from `dataset`.
  CDArchConfig sized_for(const Dataset& dataset) const;

  friend bool operator==(const CDArchConfig&, const CDArchConfig&) = default;
};

/// Inverted-dropout scale factors (0 or 1/(1-rate)) per hidden FFN layer.
struct DropoutMasks {
  std::vector<std::vector<double>> hidden;
};

/// Activations retained by forward() for an exact backward pass.
struct ForwardCache {
  bool valid = false;
  std::uint32_t student = 0;
  std::uint32_t item = 0;
  /// Student proficiency (decoupled p_s) or mastery sigma(theta_s) (neuralcdm).
  std::vector<double> proficiency;
  /// Exercise difficulty vector.
  std::vector<double> difficulty;
  /// Exercise discrimination (neuralcdm; 1 otherwise).
  double discrimination = 1.0;
  /// inputs[l] feeds FFN layer l; inputs[0] is the Q-masked cognitive gap.
  std::vector<std::vector<double>> inputs;
  /// Sigmoid outputs of each hidden layer before dropout.
  std::vector<std::vector<double>> hidden;
  DropoutMasks masks;
  double probability = 0.5;
};

/// Neural cognitive-diagnosis model.
///
/// Decoupled architecture (layer ids in parentheses):
///   p_s = sigmoid(E_C e_s + prof_bias)       (student_emb I x d, kc_emb K x d, prof_bias K)
///   d_q = sigmoid(E_C e_q + diff_bias)       (exercise_emb J x d, diff_bias K)
///   g   = (p_s - d_q) * Q[q, :]
///   y   = sigmoid(FFN(g))                    (ffn_W{l}, ffn_b{l}; sigmoid hidden units)
///
/// NeuralCDM variant:
///   h_s = sigmoid(theta_s), h_d = sigmoid(e_q), disc = sigmoid(e_disc_q)
///                                            (student_emb I x K, exercise_emb J x K, exercise_disc J x 1)
///   y   = sigmoid(FFN(Q[q, :] * (h_s - h_d) * disc)), FFN weights kept >= 0.
///
/// A record (s, q, r) only reaches student row s and exercise row q; every
/// other embedding row gets an exactly-zero gradient.
class CDModel final : public Differentiable {
 public:
  /// Fresh model: embeddings and dense weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0.
  CDModel(CDArchConfig config, QMatrix qmatrix, std::uint64_t seed);
  /// Wraps existing parameters; throws ValidationError if the layout does not
  /// match `config`.
  CDModel(CDArchConfig config, QMatrix qmatrix, ParamStore params);

  const CDArchConfig& config() const noexcept { return config_; }
  const QMatrix& qmatrix() const noexcept { return qmatrix_; }
  const ParamStore& parameters() const override { return params_; }
  ParamStore& mutable_parameters() noexcept { return params_; }

  /// Throws ValidationError for out-of-range ids.
  ForwardCache forward(std::uint32_t student, std::uint32_t item, const DropoutMasks* masks = nullptr) const;
  /// Adds gradients for d loss / d logit = `dloss_dlogit` into `grad`.
  /// Throws ValidationError when `cache` was not produced by forward().
  void backward(const ForwardCache& cache, double dloss_dlogit, GradientBuffer& grad) const;

  double predict(std::uint32_t student, std::uint32_t item) const;
  std::vector<double> proficiency(std::uint32_t student) const;

  double loss(const ResponseRecord& record) const override;
  double accumulate_gradient(const ResponseRecord& record, GradientBuffer& grad) const override;

  /// Draws a dropout mask for one training example.
  DropoutMasks sample_dropout(Rng& rng) const;
  /// Re-imposes architecture constraints after a parameter update
  /// (neuralcdm: negative FFN weights are clamped to 0).
  void project_constraints();

  Checkpoint to_checkpoint() const;
  /// Inverse of to_checkpoint(). The Q-matrix is not stored in checkpoints.
  static CDModel from_checkpoint(const Checkpoint& ckpt, QMatrix qmatrix);

 private:
  void check_ids(std::uint32_t student, std::uint32_t item) const;
  void bind_layers();
  void initialize(std::uint64_t seed);
  void ffn_forward(ForwardCache& cache) const;

  CDArchConfig config_;
  QMatrix qmatrix_;
  ParamStore params_;

  std::size_t student_ = 0;
  std::size_t exercise_ = 0;
  std::size_t kc_ = 0;         // decoupled
  std::size_t prof_bias_ = 0;  // decoupled
  std::size_t diff_bias_ = 0;  // decoupled
  std::size_t disc_ = 0;       // neuralcdm
  std::vector<std::size_t> ffn_w_;
  std::vector<std::size_t> ffn_b_;
};

double predict(const CDModel& model, std::uint32_t student, std::uint32_t item);
/// Like predict() but throws ValidationError unless the model is a NeuralCDM.
double predict_neuralcdm(const CDModel& model, std::uint32_t student, std::uint32_t item);
std::vector<double> proficiency(const CDModel& model, std::uint32_t student);

/// Predicted probabilities for `records`, in order.
std::vector<double> predict_all(const CDModel& model, std::span<const ResponseRecord> records);

struct TrainConfig {
  OptimizerConfig optimizer{};
  std::size_t batch_size = 256;
  std::size_t max_epochs = 100;
  /// Early-stopping patience on validation AUC; ignored without a validation set.
  std::size_t patience = 5;

  void validate() const;
};

struct TrainResult {
  CDModel model;
  double wall_time_seconds = 0.0;
  std::size_t epochs_run = 0;
  /// 1-based epoch whose parameters were kept.
  std::size_t best_epoch = 0;
  std::optional<double> best_valid_auc;
  /// Mean training loss observed during each epoch.
  std::vector<double> epoch_losses;
};

/// Minibatch training. With a nonempty `valid` set, stops once validation AUC
/// has not improved for `patience` epochs and keeps the best epoch; with an
/// empty one, runs exactly `max_epochs` epochs. Deterministic for a fixed seed.
TrainResult train(const CDArchConfig& config, std::span<const ResponseRecord> train_records,
                  std::span<const ResponseRecord> valid_records, const QMatrix& qmatrix,
                  const TrainConfig& hyper, std::uint64_t seed);

}  // namespace cdu
