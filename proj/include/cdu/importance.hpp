#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cdu/checkpoint.hpp"
#include "cdu/model.hpp"
#include "cdu/nn.hpp"

namespace cdu {

enum class ImportanceKind { fim, hessian };
enum class ImportanceSource { forget, retain, other };

std::string_view to_string(ImportanceKind kind);
std::string_view to_string(ImportanceSource source);

/// Per-parameter importance scores laid out like the model's ParamStore.
/// FIM scores are nonnegative; Hessian-diagonal estimates may be negative.
struct ImportanceMap {
  LayeredArray values;
  ImportanceKind kind = ImportanceKind::fim;
  ImportanceSource source = ImportanceSource::other;
};

/// Mean importance of each named layer, in layer order.
struct LayerImportance {
  std::vector<std::pair<std::string, double>> layers;

  /// Throws ValidationError for an unknown layer id.
  double of(std::string_view layer_id) const;
};

/// Diagonal Fisher information: mean over `records` of squared per-record
/// loss gradients. Throws on an empty dataset.
ImportanceMap fim_diag(const Differentiable& model, std::span<const ResponseRecord> records,
                       ImportanceSource source = ImportanceSource::other);

/// Arithmetic mean of `imp` over each layer.
LayerImportance layer_importance(const ImportanceMap& imp);

/// (1 - beta) * imp + beta * layer mean, elementwise. Requires beta in [0, 1]
/// and `layer_imp` computed for the same layout.
ImportanceMap smooth_importance(const ImportanceMap& imp, const LayerImportance& layer_imp, double beta);

struct HutchinsonEstimate {
  /// mean_k z_k * (H z_k)
  ImportanceMap diagonal;
  /// Per-coordinate standard error of that mean over probes (0 with one probe).
  LayeredArray standard_error;
  std::size_t probes = 0;
};

/// Writes the gradient of some loss evaluated at `at` into `out` (congruent
/// with `at`, pre-zeroed by the caller).
using GradientFn = std::function<void(const ParamStore& at, LayeredArray& out)>;

/// Hutchinson diagonal-of-Hessian estimator with Rademacher probes. H z is a
/// central difference of gradients with step 1e-3 * (1 + max|theta|).
/// Deterministic for a fixed seed.
HutchinsonEstimate hutchinson_diag(const ParamStore& at, const GradientFn& gradient, std::size_t n_probe_samples,
                                   std::uint64_t seed);

/// Hutchinson estimate for the mean BCE loss of `model` over `n_batches`
/// batches of `batch_size` records drawn (after a seeded shuffle) from
/// `records`. Uses every record when the dataset is smaller than that.
HutchinsonEstimate hutchinson_hessian_diag(const CDModel& model, std::span<const ResponseRecord> records,
                                           std::size_t n_probe_samples, std::size_t n_batches, std::uint64_t seed,
                                           std::size_t batch_size = 256,
                                           ImportanceSource source = ImportanceSource::other);

/// CSV with header `layer_id,index,value`.
void write_importance_csv(const std::filesystem::path& path, const ImportanceMap& imp);

/// Stores the map in the checkpoint container with tag "importance:<kind>:<source>".
Checkpoint importance_to_checkpoint(const ImportanceMap& imp);

}  // namespace cdu
