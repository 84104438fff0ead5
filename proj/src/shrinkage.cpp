#include "cdu/shrinkage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "cdu/error.hpp"
#include "cdu/rng.hpp"

namespace cdu {

void ShrinkageScenario::validate() const {
  if (true_means.empty()) throw ValidationError("shrinkage scenario needs p >= 1");
  if (!(noise_std > 0.0)) throw ValidationError("noise_std must be positive");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta must lie in [0, 1]");
  if (trials == 0) throw ValidationError("trials must be >= 1");
}

MseResult simulate_mse(const ShrinkageScenario& scenario) {
  scenario.validate();
  const std::size_t p = scenario.p();
  const double beta = scenario.beta;
  std::vector<double> x(p);

  double sum_n = 0.0, sum_n2 = 0.0, sum_a = 0.0, sum_a2 = 0.0, sum_d = 0.0, sum_d2 = 0.0;
  for (std::size_t t = 0; t < scenario.trials; ++t) {
    Rng rng(derive_seed(scenario.seed, t));
    for (std::size_t i = 0; i < p; ++i) x[i] = scenario.true_means[i] + scenario.noise_std * rng.normal();
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(p);
    double naive = 0.0;
    double adjusted = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      const double en = x[i] - scenario.true_means[i];
      const double ea = (1.0 - beta) * x[i] + beta * mean - scenario.true_means[i];
      naive += en * en;
      adjusted += ea * ea;
    }
    const double diff = adjusted - naive;
    sum_n += naive;
    sum_n2 += naive * naive;
    sum_a += adjusted;
    sum_a2 += adjusted * adjusted;
    sum_d += diff;
    sum_d2 += diff * diff;
  }

  const double n = static_cast<double>(scenario.trials);
  const auto se = [n](double s, double s2) {
    if (n < 2.0) return 0.0;
    const double m = s / n;
    return std::sqrt(std::max(0.0, (s2 - n * m * m) / (n - 1.0)) / n);
  };
  MseResult r;
  r.trials = scenario.trials;
  r.mse_naive = sum_n / n;
  r.mse_adjusted = sum_a / n;
  r.se_naive = se(sum_n, sum_n2);
  r.se_adjusted = se(sum_a, sum_a2);
  r.se_difference = se(sum_d, sum_d2);
  return r;
}

double sum_sq_dev(std::span<const double> true_means) {
  if (true_means.empty()) return 0.0;
  const double mean = std::accumulate(true_means.begin(), true_means.end(), 0.0) / static_cast<double>(true_means.size());
  double s = 0.0;
  for (double m : true_means) s += (mean - m) * (mean - m);
  return s;
}

double closed_form_mse(std::size_t p, double sum_sq_dev, double sigma_sq, double beta) {
  if (!(sigma_sq > 0.0)) throw ValidationError("sigma must be positive");
  const double pd = static_cast<double>(p);
  return beta * beta * (sum_sq_dev + pd * sigma_sq + sigma_sq) - 2.0 * pd * beta * sigma_sq + pd * sigma_sq;
}

double closed_form_mse(std::span<const double> true_means, double sigma, double beta) {
  return closed_form_mse(true_means.size(), sum_sq_dev(true_means), sigma * sigma, beta);
}

double exact_total_mse(std::size_t p, double sum_sq_dev, double sigma_sq, double beta) {
  if (!(sigma_sq > 0.0)) throw ValidationError("sigma must be positive");
  const double pm1 = static_cast<double>(p) - 1.0;
  return beta * beta * (sum_sq_dev + pm1 * sigma_sq) - 2.0 * pm1 * beta * sigma_sq +
         static_cast<double>(p) * sigma_sq;
}

double exact_total_mse(std::span<const double> true_means, double sigma, double beta) {
  return exact_total_mse(true_means.size(), sum_sq_dev(true_means), sigma * sigma, beta);
}

double optimal_beta(std::size_t p, double sum_sq_dev, double sigma_sq) {
  if (!(sigma_sq > 0.0)) throw ValidationError("sigma^2 must be positive");
  if (!(sum_sq_dev >= 0.0)) throw ValidationError("sum of squared deviations must be nonnegative");
  if (std::isinf(sum_sq_dev)) return 0.0;
  const double pd = static_cast<double>(p);
  return std::clamp(pd * sigma_sq / (sum_sq_dev + pd * sigma_sq + sigma_sq), 0.0, 1.0);
}

double exact_optimal_beta(std::size_t p, double sum_sq_dev, double sigma_sq) {
  if (!(sigma_sq > 0.0)) throw ValidationError("sigma^2 must be positive");
  if (!(sum_sq_dev >= 0.0)) throw ValidationError("sum of squared deviations must be nonnegative");
  if (p < 2) return 0.0;
  const double pm1 = static_cast<double>(p) - 1.0;
  return std::clamp(pm1 * sigma_sq / (sum_sq_dev + pm1 * sigma_sq), 0.0, 1.0);
}

BetaRecommendation recommend_beta(std::span<const double> layer_values, double sigma_sq) {
  const std::size_t p = layer_values.size();
  if (p < 3) throw ValidationError("shrinkage needs a layer with at least 3 parameters");
  if (!(sigma_sq > 0.0)) throw ValidationError("sigma^2 must be positive");
  const double dev = sum_sq_dev(layer_values);
  BetaRecommendation rec;
  if (dev == 0.0) {
    rec.beta = 1.0;
    rec.raw = std::numeric_limits<double>::infinity();
    rec.degenerate = true;
    return rec;
  }
  rec.raw = (static_cast<double>(p) - 2.0) * sigma_sq / dev;
  rec.beta = std::clamp(rec.raw, 0.0, 1.0);
  return rec;
}

BetaRecommendation recommend_beta(const ImportanceMap& imp, std::string_view layer_id, double sigma_sq) {
  return recommend_beta(imp.values.values(imp.values.index_of(layer_id)), sigma_sq);
}

double estimate_fim_noise_variance(const Differentiable& model, std::span<const ResponseRecord> records,
                                   std::string_view layer_id) {
  if (records.size() < 2) throw ValidationError("noise variance needs at least two records");
  const ParamStore& params = model.parameters();
  const std::size_t target = params.index_of(layer_id);
  const std::size_t size = params.layer(target).size();
  std::vector<double> s1(size, 0.0);
  std::vector<double> s2(size, 0.0);

  GradientBuffer grad(params);
  for (const auto& r : records) {
    grad.clear();
    model.accumulate_gradient(r, grad);
    auto g = grad.values(target);
    for (const auto& span : grad.touched()) {
      if (span.layer != target) continue;
      for (std::size_t i = span.offset; i < span.offset + span.length; ++i) {
        const double sq = g[i] * g[i];
        s1[i] += sq;
        s2[i] += sq * sq;
      }
    }
  }
  const double n = static_cast<double>(records.size());
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double mean = s1[i] / n;
    const double var = std::max(0.0, (s2[i] - n * mean * mean) / (n - 1.0));
    total += var / n;
  }
  return total / static_cast<double>(size);
}

std::vector<ShrinkageSweepRow> shrinkage_sweep(ShrinkageScenario scenario, std::span<const double> betas) {
  if (betas.empty()) throw ValidationError("beta grid is empty");
  std::vector<ShrinkageSweepRow> rows;
  rows.reserve(betas.size());
  for (double beta : betas) {
    scenario.beta = beta;
    rows.push_back({beta, simulate_mse(scenario)});
  }
  return rows;
}

void write_shrinkage_csv(const std::filesystem::path& path, std::span<const ShrinkageSweepRow> rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "beta,mse_naive,mse_adjusted,se_naive,se_adjusted\n";
  for (const auto& row : rows) {
    out << row.beta << ',' << row.result.mse_naive << ',' << row.result.mse_adjusted << ',' << row.result.se_naive
        << ',' << row.result.se_adjusted << '\n';
  }
}

}  // namespace cdu
