#include "cdu/nn.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "cdu/error.hpp"

namespace cdu {

std::size_t LayeredArray::add_layer(std::string id, std::vector<std::size_t> shape, double fill) {
  if (find(id)) throw ValidationError("duplicate layer id '" + id + "'");
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  layers_.push_back({std::move(id), std::move(shape), std::vector<double>(n, fill)});
  return layers_.size() - 1;
}

std::size_t LayeredArray::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.size();
  return n;
}

std::optional<std::size_t> LayeredArray::find(std::string_view id) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].id == id) return i;
  }
  return std::nullopt;
}

std::size_t LayeredArray::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw ValidationError("unknown layer id '" + std::string(id) + "'");
}

bool LayeredArray::congruent(const LayeredArray& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].id != other.layers_[i].id || layers_[i].shape != other.layers_[i].shape) return false;
  }
  return true;
}

LayeredArray LayeredArray::zeros_like() const {
  LayeredArray out;
  out.layers_.reserve(layers_.size());
  for (const auto& l : layers_) out.layers_.push_back({l.id, l.shape, std::vector<double>(l.size(), 0.0)});
  return out;
}

void LayeredArray::fill(double v) {
  for (auto& l : layers_) std::fill(l.values.begin(), l.values.end(), v);
}

void GradientBuffer::touch(std::size_t layer, std::size_t offset, std::size_t length) {
  const LayerSpan span{layer, offset, length};
  if (std::find(touched_.begin(), touched_.end(), span) == touched_.end()) touched_.push_back(span);
}

void GradientBuffer::clear() {
  for (const auto& s : touched_) {
    auto v = values(s.layer);
    std::fill(v.begin() + static_cast<std::ptrdiff_t>(s.offset),
              v.begin() + static_cast<std::ptrdiff_t>(s.offset + s.length), 0.0);
  }
  touched_.clear();
}

double bce_loss(double p, int y) {
  const double q = std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  return y == 1 ? -std::log(q) : -std::log(1.0 - q);
}

double bce_grad(double p, int y) {
  if (p < kProbabilityEpsilon || p > 1.0 - kProbabilityEpsilon) return 0.0;
  return y == 1 ? -1.0 / p : 1.0 / (1.0 - p);
}

double bce_logit_grad(double p, int y) {
  if (p < kProbabilityEpsilon || p > 1.0 - kProbabilityEpsilon) return 0.0;
  return p - static_cast<double>(y);
}

void dense_forward(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                   std::span<double> y) {
  const std::size_t in = x.size();
  for (std::size_t o = 0; o < y.size(); ++o) {
    const double* row = w.data() + o * in;
    double acc = b[o];
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

void dense_backward(std::span<const double> w, std::span<const double> x, std::span<const double> dy,
                    std::span<double> dw, std::span<double> db, std::span<double> dx) {
  const std::size_t in = x.size();
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t o = 0; o < dy.size(); ++o) {
    const double g = dy[o];
    db[o] += g;
    double* drow = dw.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) drow[i] += g * x[i];
    if (!dx.empty()) {
      const double* row = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) dx[i] += row[i] * g;
    }
  }
}

Optimizer::Optimizer(OptimizerConfig config, const LayeredArray& like)
    : config_(config), m_(like.zeros_like()), v_(like.zeros_like()) {
  if (!(config_.lr >= 0.0)) throw ValidationError("learning rate must be nonnegative");
}

void Optimizer::step(ParamStore& params, const LayeredArray& grads) {
  if (!params.congruent(m_) || !grads.congruent(m_)) {
    throw ValidationError("optimizer step: parameter/gradient shapes do not match the optimizer state");
  }
  ++steps_;
  if (config_.kind == OptimizerKind::sgd) {
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
      auto p = params.values(l);
      auto g = grads.values(l);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= config_.lr * g[i];
    }
    return;
  }
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    auto p = params.values(l);
    auto g = grads.values(l);
    auto m = m_.values(l);
    auto v = v_.values(l);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

LayeredArray accumulate_sq_grads(const Differentiable& model, std::span<const ResponseRecord> records) {
  if (records.empty()) throw ValidationError("squared-gradient accumulation needs a nonempty dataset");
  const auto& params = model.parameters();
  LayeredArray acc = params.zeros_like();
  GradientBuffer grad(params);
  for (const auto& r : records) {
    grad.clear();
    model.accumulate_gradient(r, grad);
    for (const auto& s : grad.touched()) {
      auto g = grad.values(s.layer);
      auto a = acc.values(s.layer);
      for (std::size_t i = s.offset; i < s.offset + s.length; ++i) a[i] += g[i] * g[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(records.size());
  for (std::size_t l = 0; l < acc.layer_count(); ++l) {
    for (auto& v : acc.values(l)) v *= inv;
  }
  return acc;
}

LayeredArray mean_gradient(const Differentiable& model, std::span<const ResponseRecord> records) {
  if (records.empty()) throw ValidationError("mean gradient needs a nonempty dataset");
  LayeredArray out = model.parameters().zeros_like();
  GradientBuffer grad(model.parameters());
  for (const auto& r : records) {
    grad.clear();
    model.accumulate_gradient(r, grad);
    for (const auto& s : grad.touched()) {
      auto g = grad.values(s.layer);
      auto o = out.values(s.layer);
      for (std::size_t i = s.offset; i < s.offset + s.length; ++i) o[i] += g[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(records.size());
  for (std::size_t l = 0; l < out.layer_count(); ++l) {
    for (auto& v : out.values(l)) v *= inv;
  }
  return out;
}

double mean_loss(const Differentiable& model, std::span<const ResponseRecord> records) {
  if (records.empty()) throw ValidationError("mean loss needs a nonempty dataset");
  double total = 0.0;
  for (const auto& r : records) total += model.loss(r);
  return total / static_cast<double>(records.size());
}

}  // namespace cdu
