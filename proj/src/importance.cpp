#include "cdu/importance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cdu/error.hpp"
#include "cdu/rng.hpp"

namespace cdu {

std::string_view to_string(ImportanceKind kind) { return kind == ImportanceKind::fim ? "fim" : "hessian"; }

std::string_view to_string(ImportanceSource source) {
  switch (source) {
    case ImportanceSource::forget: return "forget";
    case ImportanceSource::retain: return "retain";
    case ImportanceSource::other: break;
  }
  return "other";
}

double LayerImportance::of(std::string_view layer_id) const {
  for (const auto& [id, value] : layers) {
    if (id == layer_id) return value;
  }
  throw ValidationError("no layer importance for '" + std::string(layer_id) + "'");
}

ImportanceMap fim_diag(const Differentiable& model, std::span<const ResponseRecord> records, ImportanceSource source) {
  return {accumulate_sq_grads(model, records), ImportanceKind::fim, source};
}

LayerImportance layer_importance(const ImportanceMap& imp) {
  LayerImportance out;
  for (const auto& layer : imp.values.layers()) {
    if (layer.values.empty()) throw ValidationError("layer '" + layer.id + "' is empty");
    const double sum = std::accumulate(layer.values.begin(), layer.values.end(), 0.0);
    out.layers.emplace_back(layer.id, sum / static_cast<double>(layer.size()));
  }
  return out;
}

ImportanceMap smooth_importance(const ImportanceMap& imp, const LayerImportance& layer_imp, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("smoothing factor beta must lie in [0, 1]");
  if (layer_imp.layers.size() != imp.values.layer_count()) {
    throw ValidationError("layer importance does not match the importance map");
  }
  ImportanceMap out = imp;
  for (std::size_t l = 0; l < out.values.layer_count(); ++l) {
    if (layer_imp.layers[l].first != out.values.layer(l).id) {
      throw ValidationError("layer importance does not match the importance map");
    }
    const double mean = layer_imp.layers[l].second;
    for (auto& v : out.values.values(l)) v = (1.0 - beta) * v + beta * mean;
  }
  return out;
}

HutchinsonEstimate hutchinson_diag(const ParamStore& at, const GradientFn& gradient, std::size_t n_probe_samples,
                                   std::uint64_t seed) {
  if (n_probe_samples == 0) throw ValidationError("Hutchinson estimator needs at least one probe");
  double max_abs = 0.0;
  for (const auto& layer : at.layers()) {
    for (double v : layer.values) max_abs = std::max(max_abs, std::abs(v));
  }
  const double eps = 1e-3 * (1.0 + max_abs);

  Rng rng(seed);
  LayeredArray sum = at.zeros_like();
  LayeredArray sum_sq = at.zeros_like();
  LayeredArray probe = at.zeros_like();
  LayeredArray g_plus = at.zeros_like();
  LayeredArray g_minus = at.zeros_like();
  ParamStore shifted = at;

  for (std::size_t k = 0; k < n_probe_samples; ++k) {
    for (std::size_t l = 0; l < probe.layer_count(); ++l) {
      for (auto& z : probe.values(l)) z = rng.rademacher();
    }
    for (int sign : {+1, -1}) {
      for (std::size_t l = 0; l < at.layer_count(); ++l) {
        auto base = at.values(l);
        auto z = probe.values(l);
        auto s = shifted.values(l);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = base[i] + sign * eps * z[i];
      }
      LayeredArray& out = sign > 0 ? g_plus : g_minus;
      out.fill(0.0);
      gradient(shifted, out);
    }
    for (std::size_t l = 0; l < at.layer_count(); ++l) {
      auto z = probe.values(l);
      auto gp = g_plus.values(l);
      auto gm = g_minus.values(l);
      auto s1 = sum.values(l);
      auto s2 = sum_sq.values(l);
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double sample = z[i] * (gp[i] - gm[i]) / (2.0 * eps);
        s1[i] += sample;
        s2[i] += sample * sample;
      }
    }
  }

  const double n = static_cast<double>(n_probe_samples);
  HutchinsonEstimate est;
  est.probes = n_probe_samples;
  est.diagonal.kind = ImportanceKind::hessian;
  est.diagonal.values = at.zeros_like();
  est.standard_error = at.zeros_like();
  for (std::size_t l = 0; l < at.layer_count(); ++l) {
    auto s1 = sum.values(l);
    auto s2 = sum_sq.values(l);
    auto mean = est.diagonal.values.values(l);
    auto se = est.standard_error.values(l);
    for (std::size_t i = 0; i < s1.size(); ++i) {
      mean[i] = s1[i] / n;
      if (n_probe_samples > 1) {
        const double var = std::max(0.0, (s2[i] - n * mean[i] * mean[i]) / (n - 1.0));
        se[i] = std::sqrt(var / n);
      }
    }
  }
  return est;
}

HutchinsonEstimate hutchinson_hessian_diag(const CDModel& model, std::span<const ResponseRecord> records,
                                           std::size_t n_probe_samples, std::size_t n_batches, std::uint64_t seed,
                                           std::size_t batch_size, ImportanceSource source) {
  if (n_probe_samples == 0) throw ValidationError("n_probe_samples must be >= 1");
  if (n_batches == 0) throw ValidationError("n_batches must be >= 1");
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (records.empty()) throw ValidationError("Hessian estimation needs a nonempty dataset");

  std::vector<ResponseRecord> shuffled(records.begin(), records.end());
  Rng rng(derive_seed(seed, 0));
  rng.shuffle(std::span(shuffled));
  shuffled.resize(std::min(shuffled.size(), n_batches * batch_size));

  CDModel probe_model = model;
  const GradientFn gradient = [&](const ParamStore& at, LayeredArray& out) {
    probe_model.mutable_parameters() = at;
    out = mean_gradient(probe_model, shuffled);
  };
  HutchinsonEstimate est = hutchinson_diag(model.parameters(), gradient, n_probe_samples, derive_seed(seed, 1));
  est.diagonal.source = source;
  return est;
}

void write_importance_csv(const std::filesystem::path& path, const ImportanceMap& imp) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "layer_id,index,value\n";
  for (const auto& layer : imp.values.layers()) {
    for (std::size_t i = 0; i < layer.size(); ++i) out << layer.id << ',' << i << ',' << layer.values[i] << '\n';
  }
}

Checkpoint importance_to_checkpoint(const ImportanceMap& imp) {
  Checkpoint ckpt;
  ckpt.tag = "importance:" + std::string(to_string(imp.kind)) + ":" + std::string(to_string(imp.source));
  ckpt.layers = imp.values;
  return ckpt;
}

}  // namespace cdu
