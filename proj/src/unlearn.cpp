#include "cdu/unlearn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "cdu/error.hpp"
#include "cdu/rng.hpp"

namespace cdu {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_forget_retain(std::span<const ResponseRecord> forget, std::span<const ResponseRecord> retain) {
  if (forget.empty()) throw ValidationError("forget set is empty");
  if (retain.empty()) throw ValidationError("retain set is empty");
  std::unordered_set<std::uint32_t> forget_students;
  for (const auto& r : forget) forget_students.insert(r.student);
  for (const auto& r : retain) {
    if (forget_students.count(r.student) != 0) {
      throw ValidationError("forget and retain sets share student " + std::to_string(r.student));
    }
  }
}

void check_alpha_lambda(double alpha, double lambda) {
  if (!(alpha > 0.0)) throw ValidationError("alpha must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
}

ImportanceMap absolute(ImportanceMap imp) {
  for (std::size_t l = 0; l < imp.values.layer_count(); ++l) {
    for (auto& v : imp.values.values(l)) v = std::abs(v);
  }
  return imp;
}

}  // namespace

void HIFConfig::validate() const {
  check_alpha_lambda(alpha, lambda);
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta must lie in [0, 1]");
}

void HessianUnlearnConfig::validate() const {
  check_alpha_lambda(alpha, lambda);
  if (n_probe_samples == 0) throw ValidationError("n_probe_samples must be >= 1");
  if (n_batches == 0) throw ValidationError("n_batches must be >= 1");
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
}

std::optional<double> attenuation_factor(double adjusted_forget, double retain, double alpha, double lambda) {
  if (!(adjusted_forget > alpha * retain)) return std::nullopt;
  const double ratio = retain > 0.0 ? adjusted_forget / retain : std::numeric_limits<double>::infinity();
  return 1.0 - lambda * std::min(ratio, 1.0);
}

std::size_t select_and_attenuate(ParamStore& params, const ImportanceMap& adjusted_forget,
                                 const ImportanceMap& retain, double alpha, double lambda,
                                 const std::vector<std::string>& excluded_layers) {
  check_alpha_lambda(alpha, lambda);
  if (!params.congruent(adjusted_forget.values) || !params.congruent(retain.values)) {
    throw ValidationError("importance maps do not match the model");
  }
  for (const auto& id : excluded_layers) params.index_of(id);  // reject unknown ids

  std::size_t selected = 0;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    const auto& id = params.layer(l).id;
    if (std::find(excluded_layers.begin(), excluded_layers.end(), id) != excluded_layers.end()) continue;
    auto theta = params.values(l);
    auto f = adjusted_forget.values.values(l);
    auto r = retain.values.values(l);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (auto factor = attenuation_factor(f[i], r[i], alpha, lambda)) {
        theta[i] *= *factor;
        ++selected;
      }
    }
  }
  return selected;
}

UnlearnResult hif_unlearn(const CDModel& model, std::span<const ResponseRecord> forget,
                          std::span<const ResponseRecord> retain, const HIFConfig& config) {
  config.validate();
  check_forget_retain(forget, retain);
  const auto start = Clock::now();

  const ImportanceMap imp_forget = fim_diag(model, forget, ImportanceSource::forget);
  const ImportanceMap imp_retain = fim_diag(model, retain, ImportanceSource::retain);
  const ImportanceMap adjusted = smooth_importance(imp_forget, layer_importance(imp_forget), config.beta);

  UnlearnResult result{model, {}};
  result.report.parameters_modified = select_and_attenuate(result.model.mutable_parameters(), adjusted, imp_retain,
                                                           config.alpha, config.lambda, config.excluded_layers);
  result.model.project_constraints();
  result.report.wall_time_seconds = seconds_since(start);
  result.report.algorithm = "hif";
  result.report.parameters_total = model.parameters().total_size();
  result.report.config = {{"alpha", config.alpha},
                          {"lambda", config.lambda},
                          {"beta", config.beta},
                          {"excluded_layers", config.excluded_layers}};
  return result;
}

UnlearnResult fim_unlearn(const CDModel& model, std::span<const ResponseRecord> forget,
                          std::span<const ResponseRecord> retain, double alpha, double lambda) {
  HIFConfig config;
  config.alpha = alpha;
  config.lambda = lambda;
  config.beta = 0.0;
  UnlearnResult result = hif_unlearn(model, forget, retain, config);
  result.report.algorithm = "fim";
  result.report.config = {{"alpha", alpha}, {"lambda", lambda}};
  return result;
}

UnlearnResult gradient_ascent_unlearn(const CDModel& model, std::span<const ResponseRecord> forget, double lr,
                                      std::size_t steps) {
  if (!(lr >= 0.0)) throw ValidationError("gradient ascent learning rate must be nonnegative");
  if (forget.empty()) throw ValidationError("forget set is empty");
  const auto start = Clock::now();

  UnlearnResult result{model, {}};
  auto& params = result.model.mutable_parameters();
  for (std::size_t step = 0; step < steps; ++step) {
    const LayeredArray grad = mean_gradient(result.model, forget);
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
      auto theta = params.values(l);
      auto g = grad.values(l);
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += lr * g[i];
    }
    result.model.project_constraints();
  }

  std::size_t changed = 0;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    auto before = model.parameters().values(l);
    auto after = params.values(l);
    for (std::size_t i = 0; i < after.size(); ++i) changed += before[i] != after[i] ? 1 : 0;
  }
  result.report.algorithm = "gradasc";
  result.report.parameters_modified = changed;
  result.report.parameters_total = params.total_size();
  result.report.wall_time_seconds = seconds_since(start);
  result.report.config = {{"lr", lr}, {"steps", steps}};
  return result;
}

UnlearnResult hessian_unlearn(const CDModel& model, std::span<const ResponseRecord> forget,
                              std::span<const ResponseRecord> retain, const HessianUnlearnConfig& config) {
  config.validate();
  check_forget_retain(forget, retain);
  const auto start = Clock::now();

  const auto est_forget = hutchinson_hessian_diag(model, forget, config.n_probe_samples, config.n_batches,
                                                  derive_seed(config.seed, 0), config.batch_size,
                                                  ImportanceSource::forget);
  const auto est_retain = hutchinson_hessian_diag(model, retain, config.n_probe_samples, config.n_batches,
                                                  derive_seed(config.seed, 1), config.batch_size,
                                                  ImportanceSource::retain);
  UnlearnResult result{model, {}};
  result.report.parameters_modified =
      select_and_attenuate(result.model.mutable_parameters(), absolute(est_forget.diagonal),
                           absolute(est_retain.diagonal), config.alpha, config.lambda);
  result.model.project_constraints();
  result.report.wall_time_seconds = seconds_since(start);
  result.report.algorithm = "hessian";
  result.report.parameters_total = model.parameters().total_size();
  result.report.config = {{"alpha", config.alpha},
                          {"lambda", config.lambda},
                          {"n_probe_samples", config.n_probe_samples},
                          {"n_batches", config.n_batches},
                          {"seed", config.seed}};
  return result;
}

double selection_jaccard(const ImportanceMap& forget_a, const ImportanceMap& retain_a,
                         const ImportanceMap& forget_b, const ImportanceMap& retain_b, double alpha) {
  if (!forget_a.values.congruent(retain_a.values) || !forget_a.values.congruent(forget_b.values) ||
      !forget_a.values.congruent(retain_b.values)) {
    throw ValidationError("importance maps are not congruent");
  }
  std::size_t both = 0;
  std::size_t either = 0;
  for (std::size_t l = 0; l < forget_a.values.layer_count(); ++l) {
    auto fa = forget_a.values.values(l);
    auto ra = retain_a.values.values(l);
    auto fb = forget_b.values.values(l);
    auto rb = retain_b.values.values(l);
    for (std::size_t i = 0; i < fa.size(); ++i) {
      const bool a = fa[i] > alpha * ra[i];
      const bool b = fb[i] > alpha * rb[i];
      both += (a && b) ? 1 : 0;
      either += (a || b) ? 1 : 0;
    }
  }
  return either == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(either);
}

}  // namespace cdu
