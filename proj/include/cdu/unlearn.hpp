#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdu/importance.hpp"
#include "cdu/model.hpp"

namespace cdu {

/// Hierarchical importance-guided forgetting hyperparameters.
struct HIFConfig {
  /// Selection threshold: a parameter is attenuated when I_adj(D_f) > alpha * I(D_r).
  double alpha = 2.0;
  /// Unlearning strength in [0, 1].
  double lambda = 0.5;
  /// Smoothing toward the layer mean, in [0, 1]. 0 is plain FIM selection.
  double beta = 0.1;
  /// Layers left untouched.
  std::vector<std::string> excluded_layers;

  void validate() const;
};

struct HessianUnlearnConfig {
  double alpha = 2.0;
  double lambda = 0.5;
  std::size_t n_probe_samples = 20;
  std::size_t n_batches = 1;
  std::uint64_t seed = 0;
  std::size_t batch_size = 256;

  void validate() const;
};

struct UnlearnReport {
  std::string algorithm;
  /// Parameters that met the selection rule (gradient ascent: parameters whose
  /// value changed).
  std::size_t parameters_modified = 0;
  std::size_t parameters_total = 0;
  double wall_time_seconds = 0.0;
  nlohmann::json config;
};

struct UnlearnResult {
  CDModel model;
  UnlearnReport report;
};

/// Multiplier applied to a parameter with adjusted forget importance
/// `adjusted_forget` and retain importance `retain`, or nullopt when it is not
/// selected. Selection is adjusted_forget > alpha * retain. The ratio
/// adjusted_forget / retain counts as +inf when retain == 0, so the factor is
/// 1 - lambda * min(ratio, 1).
std::optional<double> attenuation_factor(double adjusted_forget, double retain, double alpha, double lambda);

/// Applies the select-and-attenuate rule to every parameter outside
/// `excluded_layers`. Returns the number of selected parameters.
std::size_t select_and_attenuate(ParamStore& params, const ImportanceMap& adjusted_forget,
                                 const ImportanceMap& retain, double alpha, double lambda,
                                 const std::vector<std::string>& excluded_layers = {});

/// HIF: FIM importance on D_f and D_r, layer means on D_f, smoothing by beta,
/// then select-and-attenuate. Wall time covers every step.
UnlearnResult hif_unlearn(const CDModel& model, std::span<const ResponseRecord> forget,
                          std::span<const ResponseRecord> retain, const HIFConfig& config);

/// Plain FIM unlearning: hif_unlearn with beta = 0.
UnlearnResult fim_unlearn(const CDModel& model, std::span<const ResponseRecord> forget,
                          std::span<const ResponseRecord> retain, double alpha, double lambda);

/// `steps` full-batch ascent steps theta += lr * grad(mean loss on D_f).
UnlearnResult gradient_ascent_unlearn(const CDModel& model, std::span<const ResponseRecord> forget, double lr,
                                      std::size_t steps);

/// Select-and-attenuate with |Hutchinson Hessian diagonal| on D_f and D_r as
/// the importance measure.
UnlearnResult hessian_unlearn(const CDModel& model, std::span<const ResponseRecord> forget,
                              std::span<const ResponseRecord> retain, const HessianUnlearnConfig& config);

/// |A ∩ B| / |A ∪ B| of the parameter sets selected by two importance pairs
/// under the same alpha (1 when both are empty).
double selection_jaccard(const ImportanceMap& forget_a, const ImportanceMap& retain_a,
                         const ImportanceMap& forget_b, const ImportanceMap& retain_b, double alpha);

}  // namespace cdu
