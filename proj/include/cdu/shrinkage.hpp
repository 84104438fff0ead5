#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "cdu/importance.hpp"

namespace cdu {

/// Noisy per-parameter importance estimates x_i = mu_i + eps_i, eps_i ~ N(0, sigma^2),
/// and their smoothed version (1 - beta) x_i + beta * mean(x).
struct ShrinkageScenario {
  std::vector<double> true_means;
  double noise_std = 1.0;
  double beta = 0.0;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;

  std::size_t p() const noexcept { return true_means.size(); }
  void validate() const;
};

struct MseResult {
  /// Monte-Carlo means of the total squared error sum_i (estimate_i - mu_i)^2.
  double mse_naive = 0.0;
  double mse_adjusted = 0.0;
  double se_naive = 0.0;
  double se_adjusted = 0.0;
  /// Standard error of the paired difference mse_adjusted - mse_naive.
  double se_difference = 0.0;
  std::size_t trials = 0;
};

/// Trial t draws its noise from Rng(derive_seed(seed, t)).
MseResult simulate_mse(const ShrinkageScenario& scenario);

/// sum_i (mean(mu) - mu_i)^2
double sum_sq_dev(std::span<const double> true_means);

/// beta^2 (S + p sigma^2 + sigma^2) - 2 p beta sigma^2 + p sigma^2, with
/// S = sum_sq_dev. Treats the layer mean's noise as independent of each eps_i.
double closed_form_mse(std::size_t p, double sum_sq_dev, double sigma_sq, double beta);
double closed_form_mse(std::span<const double> true_means, double sigma, double beta);

/// Expected total squared error of the smoothed estimates, including the
/// covariance between eps_i and the noisy layer mean:
/// beta^2 (S + (p - 1) sigma^2) - 2 (p - 1) beta sigma^2 + p sigma^2.
double exact_total_mse(std::size_t p, double sum_sq_dev, double sigma_sq, double beta);
double exact_total_mse(std::span<const double> true_means, double sigma, double beta);

/// p sigma^2 / (S + p sigma^2 + sigma^2), clamped to [0, 1]. The minimizer of
/// closed_form_mse.
double optimal_beta(std::size_t p, double sum_sq_dev, double sigma_sq);

/// (p - 1) sigma^2 / (S + (p - 1) sigma^2): the minimizer of exact_total_mse.
double exact_optimal_beta(std::size_t p, double sum_sq_dev, double sigma_sq);

struct BetaRecommendation {
  /// Clamped to [0, 1].
  double beta = 0.0;
  /// Unclamped estimate (infinite when degenerate).
  double raw = 0.0;
  /// True when every importance in the layer is identical.
  bool degenerate = false;
};

/// Empirical shrinkage factor (p - 2) sigma^2 / sum_k (I_k - I_layer)^2 for one
/// layer of `imp`, where sigma^2 is the noise variance of a single importance
/// estimate. Requires p >= 3 and sigma_sq > 0. A zero denominator yields beta 1
/// with the degeneracy flag set.
BetaRecommendation recommend_beta(const ImportanceMap& imp, std::string_view layer_id, double sigma_sq);
BetaRecommendation recommend_beta(std::span<const double> layer_values, double sigma_sq);

/// Estimated noise variance of FIM entries in one layer: the mean over the
/// layer's parameters of (sample variance of per-record squared gradients) / N.
double estimate_fim_noise_variance(const Differentiable& model, std::span<const ResponseRecord> records,
                                   std::string_view layer_id);

struct ShrinkageSweepRow {
  double beta = 0.0;
  MseResult result;
};

/// simulate_mse at each beta with a shared seed.
std::vector<ShrinkageSweepRow> shrinkage_sweep(ShrinkageScenario scenario, std::span<const double> betas);

/// CSV with header `beta,mse_naive,mse_adjusted,se_naive,se_adjusted`.
void write_shrinkage_csv(const std::filesystem::path& path, std::span<const ShrinkageSweepRow> rows);

}  // namespace cdu
