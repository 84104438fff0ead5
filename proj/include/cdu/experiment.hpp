#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cdu/data.hpp"
#include "cdu/error.hpp"
#include "cdu/mia.hpp"
#include "cdu/model.hpp"
#include "cdu/unlearn.hpp"

namespace cdu {

inline constexpr std::string_view kSoftwareVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

enum class Algorithm { hif, fim, gradasc, hessian };

std::string_view to_string(Algorithm algo);
/// Throws ValidationError for an unknown name.
Algorithm algorithm_from_string(std::string_view name);

struct FimSettings {
  double alpha = 2.0;
  double lambda = 0.5;
};

struct GradAscSettings {
  double lr = 5e-5;
  std::size_t steps = 3;
};

/// Per-algorithm hyperparameters.
struct UnlearnSettings {
  HIFConfig hif;
  FimSettings fim;
  GradAscSettings gradasc;
  HessianUnlearnConfig hessian;
};

struct Seeds {
  std::uint64_t data = 0;
  std::uint64_t model = 0;
  std::uint64_t attack = 0;
};

struct ExperimentConfig {
  std::filesystem::path responses;
  std::filesystem::path qmatrix;
  SplitRatios split;
  /// Fraction of students in each of the forget / nm_train / nm_eval groups.
  double unlearning_ratio = 0.10;
  /// Student/item/KC counts are filled in from the dataset.
  CDArchConfig arch;
  TrainConfig train;
  std::vector<Algorithm> algorithms;
  UnlearnSettings unlearn;
  Seeds seeds;
  /// Sweep feasibility slack: utility_auc >= utility_auc(M_orig) - tolerance.
  double utility_tolerance = 0.01;
  std::filesystem::path output_dir;

  /// Checks ranges; with `check_files`, also that the data files exist.
  void validate(bool check_files = true) const;
  /// Recomputes seeds derived from `seeds` (the Hessian probe seed). Call
  /// after changing `seeds`.
  void sync_derived_seeds();

  /// Relative paths in `j` are resolved against `base_dir`. Unknown keys are
  /// rejected. Throws ValidationError.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  /// Full config, excluding output_dir.
  nlohmann::json to_json() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// An error raised inside one pipeline stage ("data", "train", "attack",
/// "unlearn:<algo>", "evaluate", "write").
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Metrics for one model under test.
struct ModelEntry {
  std::string tag;
  double utility_auc = 0.0;
  double utility_acc = 0.0;
  MIAReport mia;
  double wall_time_seconds = 0.0;
  /// Present iff the entry is an unlearned model.
  std::optional<double> rtrr;
  std::optional<std::size_t> parameters_modified;
  std::optional<std::size_t> epochs;
  nlohmann::json unlearn_config;

  /// Deterministic fields only (no wall time, no RTRR).
  nlohmann::json to_json() const;
  nlohmann::json timing_json() const;
};

struct ExperimentReport {
  nlohmann::json config;
  Seeds seeds;
  nlohmann::json dataset;
  std::vector<ModelEntry> models;

  const ModelEntry& entry(std::string_view tag) const;

  /// report.json: byte-stable for a fixed config and seeds.
  nlohmann::json to_json() const;
  /// timing.json: wall times and RTRR.
  nlohmann::json timing_json() const;
};

/// Shared state of one experiment: data splits, M_orig, M_retrain and the
/// attacker. Stages run in order: construction (data), train_models(),
/// train_attack(). unlearn() needs the models; evaluate() also needs the
/// attacker.
class ExperimentContext {
 public:
  explicit ExperimentContext(ExperimentConfig config);

  const ExperimentConfig& config() const noexcept { return config_; }
  const Dataset& dataset() const noexcept { return dataset_; }
  const StudentPartition& partition() const noexcept { return partition_; }
  const MiaSplits& splits() const noexcept { return splits_; }
  const std::vector<ResponseRecord>& forget_set() const noexcept { return forget_set_; }
  const std::vector<ResponseRecord>& retain_set() const noexcept { return retain_set_; }
  /// Architecture config sized for the dataset.
  const CDArchConfig& arch() const noexcept { return arch_; }

  void train_models();
  /// Uses externally trained models instead of train_models().
  void adopt_models(CDModel original, std::optional<CDModel> retrained, double retrain_wall_time);
  void train_attack();

  bool models_ready() const noexcept { return original_.has_value(); }
  bool attack_ready() const noexcept { return attacker_.has_value(); }

  const CDModel& original() const;
  /// Throws when no retrained model is available.
  const CDModel& retrained() const;
  bool has_retrained() const noexcept { return retrained_.has_value(); }
  double retrain_wall_time() const noexcept { return retrain_time_; }
  const AttackClassifier& attacker() const;

  const ModelEntry& original_entry() const;
  const ModelEntry& retrained_entry() const;

  /// Utility on retain-test records and MIA on D_f_test vs D_nm_eval_test.
  ModelEntry evaluate(std::string tag, const CDModel& model) const;

  UnlearnResult unlearn(Algorithm algo, const UnlearnSettings& settings) const;
  /// unlearn() followed by evaluate(), with RTRR against M_retrain's time.
  ModelEntry run_algorithm(Algorithm algo, const UnlearnSettings& settings,
                           std::optional<CDModel>* unlearned = nullptr) const;

  ExperimentReport base_report() const;

 private:
  ExperimentConfig config_;
  Dataset dataset_;
  StudentPartition partition_;
  MiaSplits splits_;
  std::vector<ResponseRecord> forget_set_;
  std::vector<ResponseRecord> retain_set_;
  CDArchConfig arch_;

  std::optional<CDModel> original_;
  std::optional<CDModel> retrained_;
  double original_time_ = 0.0;
  double retrain_time_ = 0.0;
  std::size_t original_epochs_ = 0;
  std::size_t retrain_epochs_ = 0;
  std::optional<AttackClassifier> attacker_;
  std::optional<ModelEntry> original_entry_;
  std::optional<ModelEntry> retrained_entry_;
};

/// Full pipeline. When config.output_dir is set, writes report.json,
/// timing.json, status.json and m_orig.ckpt / m_retrain.ckpt / m_<algo>.ckpt
/// there. status.json reads {"complete": false, "failed_stage": ...} if a
/// stage throws; the StageError is rethrown.
ExperimentReport run_experiment(const ExperimentConfig& config);

/// One grid point: its parameter values and the settings they produce.
struct SweepSetting {
  nlohmann::json params;
  UnlearnSettings settings;
};

struct SweepGrid {
  Algorithm algorithm = Algorithm::hif;
  std::vector<double> alpha;
  std::vector<double> lambda;
  std::vector<double> beta;
  std::vector<double> lr;
  std::vector<std::size_t> steps;
  std::vector<std::size_t> n_batches;

  /// Default ranges: alpha {1.3, 2, 2.5, 5}, lambda {0.1, 0.3, 0.5, 0.8},
  /// beta {0.02, 0.05, 0.1, 0.3, 0.5}, lr {1e-5, 5e-5, 1e-4}, steps {1, 3, 5},
  /// n_batches {1, 2}, restricted to the axes `algo` uses.
  static SweepGrid defaults(Algorithm algo);
  /// Axes missing from `j` keep their defaults.
  static SweepGrid from_json(Algorithm algo, const nlohmann::json& j);

  std::size_t size() const;
  /// Cartesian product in axis order, last axis fastest. Throws on an empty grid.
  std::vector<SweepSetting> expand(const UnlearnSettings& base) const;
};

struct SweepPoint {
  nlohmann::json params;
  ModelEntry entry;
};

struct SweepResult {
  Algorithm algorithm = Algorithm::hif;
  ModelEntry original;
  ModelEntry retrained;
  std::vector<SweepPoint> points;
  double utility_tolerance = 0.01;
  std::optional<std::size_t> best;

  nlohmann::json to_json() const;
};

/// Index of the utility-feasible point (utility_auc >= original - tolerance)
/// with the smallest |mia_auc - retrained mia_auc|; the first such point on
/// ties. nullopt when no point is feasible.
std::optional<std::size_t> select_best(const ModelEntry& original, const ModelEntry& retrained,
                                       std::span<const SweepPoint> points, double utility_tolerance);

/// Evaluates every grid point against the context's shared models.
SweepResult sweep(const ExperimentContext& context, const SweepGrid& grid);
/// Builds the context, runs the grid, and writes sweep_<algo>.json to output_dir if set.
SweepResult sweep(const ExperimentConfig& config, const SweepGrid& grid);

struct ProfileRow {
  std::uint32_t student = 0;
  std::size_t kc = 0;
  double proficiency = 0.0;
};

/// K rows per requested student. Throws ValidationError for an unknown id.
std::vector<ProfileRow> export_profiles(const CDModel& model, std::span<const std::uint32_t> students);
/// CSV with header `student_id,kc_index,proficiency`.
void write_profiles_csv(const std::filesystem::path& path, std::span<const ProfileRow> rows);

/// Writes `j` with 2-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace cdu
