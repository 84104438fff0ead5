#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdu/data.hpp"

namespace cdu {

/// A named block of parameters, stored flat in row-major order.
struct Layer {
  std::string id;
  std::vector<std::size_t> shape;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Ordered collection of named layers. Every scalar is addressable as
/// (layer index or id, flat index). Shared layout for parameters, gradients,
/// optimizer moments and importance scores.
class LayeredArray {
 public:
  /// Appends a zero-filled (or `fill`-filled) layer; returns its index.
  std::size_t add_layer(std::string id, std::vector<std::size_t> shape, double fill = 0.0);

  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t total_size() const noexcept;

  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  Layer& layer(std::size_t i) { return layers_.at(i); }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  std::optional<std::size_t> find(std::string_view id) const;
  /// Like find() but throws ValidationError for an unknown id.
  std::size_t index_of(std::string_view id) const;

  std::span<double> values(std::size_t i) { return layers_.at(i).values; }
  std::span<const double> values(std::size_t i) const { return layers_.at(i).values; }
  std::span<double> values(std::string_view id) { return values(index_of(id)); }
  std::span<const double> values(std::string_view id) const { return values(index_of(id)); }

  /// Same ids, same shapes, same order.
  bool congruent(const LayeredArray& other) const;
  LayeredArray zeros_like() const;
  void fill(double v);

  friend bool operator==(const LayeredArray&, const LayeredArray&) = default;

 protected:
  std::vector<Layer> layers_;
};

/// Model parameters plus the seed they were initialised from.
class ParamStore : public LayeredArray {
 public:
  ParamStore() = default;
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}
  ParamStore(LayeredArray layers, std::uint64_t seed) : LayeredArray(std::move(layers)), seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::uint64_t seed_ = 0;
};

/// Contiguous run of scalars inside one layer.
struct LayerSpan {
  std::size_t layer = 0;
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const LayerSpan&, const LayerSpan&) = default;
};

/// Per-parameter loss gradient, congruent with a ParamStore. Tracks which
/// spans a backward pass wrote so a single-example gradient can be read and
/// cleared without sweeping every embedding row.
class GradientBuffer : public LayeredArray {
 public:
  GradientBuffer() = default;
  explicit GradientBuffer(const LayeredArray& like) : LayeredArray(like.zeros_like()) {}

  /// Records that [offset, offset+length) of `layer` may be nonzero. Repeated
  /// identical spans are recorded once.
  void touch(std::size_t layer, std::size_t offset, std::size_t length);
  std::span<const LayerSpan> touched() const noexcept { return touched_; }

  /// Zeroes the touched spans and forgets them.
  void clear();

 private:
  std::vector<LayerSpan> touched_;
};

// --- forward/backward primitives -----------------------------------------

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Probability clamp applied before taking logs.
inline constexpr double kProbabilityEpsilon = 1e-7;

/// Binary cross-entropy of probability p against label y in {0,1}, with p
/// clamped to [eps, 1-eps].
double bce_loss(double p, int y);
/// d bce / d p of the clamped loss (zero where the clamp is active).
double bce_grad(double p, int y);
/// d bce(sigmoid(z)) / d z given p = sigmoid(z). Equals p - y inside the clamp
/// band and 0 outside it.
double bce_logit_grad(double p, int y);

/// y = W x + b with W stored row-major as (y.size() x x.size()).
void dense_forward(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                   std::span<double> y);

/// Accumulates dW += dy x^T and db += dy; writes dx = W^T dy when dx is
/// non-empty.
void dense_backward(std::span<const double> w, std::span<const double> x, std::span<const double> dy,
                    std::span<double> dw, std::span<double> db, std::span<double> dx);

// --- optimizers ------------------------------------------------------------

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Optimizer {
 public:
  Optimizer(OptimizerConfig config, const LayeredArray& like);

  /// sgd: theta -= lr * g. adam: bias-corrected Adam update.
  /// Throws ValidationError when `grads` or `params` is not congruent with
  /// the optimizer state.
  void step(ParamStore& params, const LayeredArray& grads);

  std::size_t steps() const noexcept { return steps_; }
  const OptimizerConfig& config() const noexcept { return config_; }

 private:
  OptimizerConfig config_;
  LayeredArray m_;
  LayeredArray v_;
  std::size_t steps_ = 0;
};

// --- per-example gradients ----------------------------------------------

/// A model whose per-record loss gradient can be computed exactly and
/// deterministically (inference mode: no dropout).
class Differentiable {
 public:
  virtual ~Differentiable() = default;
  virtual const ParamStore& parameters() const = 0;
  virtual double loss(const ResponseRecord& record) const = 0;
  /// Adds d loss(record) / d theta into `grad`, touching every span it writes,
  /// and returns the loss.
  virtual double accumulate_gradient(const ResponseRecord& record, GradientBuffer& grad) const = 0;
};

/// For every parameter, (1/|D|) * sum over records of the squared per-record
/// gradient. Summation runs in dataset order. Throws on an empty dataset.
LayeredArray accumulate_sq_grads(const Differentiable& model, std::span<const ResponseRecord> records);

/// Gradient of the mean loss over `records` (dense).
LayeredArray mean_gradient(const Differentiable& model, std::span<const ResponseRecord> records);

/// Mean loss over `records`.
double mean_loss(const Differentiable& model, std::span<const ResponseRecord> records);

}  // namespace cdu
