#include <doctest.h>

#include <cmath>
#include <vector>

#include "cdu/error.hpp"
#include "cdu/model.hpp"
#include "cdu/nn.hpp"
#include "support.hpp"

using namespace cdu;

namespace {

ParamStore scalar_store(double v) {
  ParamStore p(0);
  p.add_layer("w", {1}, v);
  return p;
}

LayeredArray scalar_grad(double g) {
  LayeredArray a;
  a.add_layer("w", {1}, g);
  return a;
}

CDModel small_model(std::uint64_t seed = 1) {
  Rng rng(seed);
  const QMatrix q = testing::random_q(6, 3, rng);
  return CDModel(testing::tiny_arch(Architecture::decoupled, 5, 6, 3), q, seed);
}

}  // namespace

TEST_CASE("sigmoid") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(30.0) < 1.0);
  CHECK(sigmoid(40.0) <= 1.0);
  CHECK(sigmoid(-40.0) > 0.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(2.0) + sigmoid(-2.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("bce_loss and its derivative") {
  CHECK(bce_loss(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss(0.5, 0) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(bce_loss(1.0 - 1e-7, 1) == doctest::Approx(1e-7).epsilon(1e-3));
  CHECK(std::isfinite(bce_loss(1.0, 0)));
  CHECK(std::isfinite(bce_loss(0.0, 1)));
  CHECK(bce_loss(0.0, 1) == doctest::Approx(-std::log(1e-7)));
  CHECK(bce_grad(0.5, 1) == doctest::Approx(-2.0));
  CHECK(bce_grad(0.25, 0) == doctest::Approx(1.0 / 0.75));
  CHECK(bce_logit_grad(0.3, 1) == doctest::Approx(-0.7));
  CHECK(bce_logit_grad(0.3, 0) == doctest::Approx(0.3));
}

TEST_CASE("dense layer forward and backward") {
  const std::vector<double> w{1, 2, 3, 4};
  const std::vector<double> b{0.5, -0.5};
  const std::vector<double> x{1, 1};
  std::vector<double> y(2);
  dense_forward(w, b, x, y);
  CHECK(y == std::vector<double>{3.5, 6.5});

  const std::vector<double> dy{1, 2};
  std::vector<double> dw(4, 0.0), db(2, 0.0), dx(2, 0.0);
  dense_backward(w, x, dy, dw, db, dx);
  CHECK(dw == std::vector<double>{1, 1, 2, 2});
  CHECK(db == std::vector<double>{1, 2});
  CHECK(dx == std::vector<double>{7, 10});
  // Accumulates rather than overwrites.
  dense_backward(w, x, dy, dw, db, {});
  CHECK(dw == std::vector<double>{2, 2, 4, 4});
}

TEST_CASE("all-zero weights give 0.5 everywhere") {
  CDModel m = small_model();
  for (std::size_t l = 0; l < m.parameters().layer_count(); ++l) {
    for (auto& v : m.mutable_parameters().values(l)) v = 0.0;
  }
  for (std::uint32_t s = 0; s < 5; ++s) {
    for (std::uint32_t q = 0; q < 6; ++q) CHECK(m.predict(s, q) == 0.5);
  }
}

TEST_CASE("optimizer steps") {
  SUBCASE("sgd") {
    ParamStore p = scalar_store(1.0);
    Optimizer opt({OptimizerKind::sgd, 0.1}, p);
    opt.step(p, scalar_grad(2.0));
    CHECK(p.values(0)[0] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(opt.steps() == 1);
  }
  SUBCASE("first adam step moves by about lr") {
    ParamStore p = scalar_store(1.0);
    OptimizerConfig cfg;
    cfg.lr = 0.01;
    Optimizer opt(cfg, p);
    opt.step(p, scalar_grad(1.0));
    // m_hat = v_hat = 1 after bias correction.
    const double expected = -0.01 * 1.0 / (1.0 + cfg.eps);
    CHECK(p.values(0)[0] - 1.0 == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    CDModel m = small_model(3);
    ParamStore p = m.parameters();
    const ParamStore before = p;
    Optimizer opt({OptimizerKind::sgd, 0.5}, p);
    opt.step(p, p.zeros_like());
    CHECK(p == before);
  }
  SUBCASE("incongruent shapes") {
    ParamStore p = scalar_store(1.0);
    Optimizer opt({OptimizerKind::adam, 0.1}, p);
    LayeredArray g;
    g.add_layer("w", {2});
    CHECK_THROWS_AS(opt.step(p, g), ValidationError);
    LayeredArray renamed;
    renamed.add_layer("v", {1});
    CHECK_THROWS_AS(opt.step(p, renamed), ValidationError);
  }
}

TEST_CASE("backward needs a forward cache") {
  const CDModel m = small_model();
  GradientBuffer g(m.parameters());
  CHECK_THROWS_AS(m.backward(ForwardCache{}, 1.0, g), ValidationError);
}

TEST_CASE("scaling the loss scales every gradient component") {
  const CDModel m = small_model(4);
  const ForwardCache cache = m.forward(2, 3);
  const double d = bce_logit_grad(cache.probability, 1);
  GradientBuffer one(m.parameters()), two(m.parameters());
  m.backward(cache, d, one);
  m.backward(cache, 2.0 * d, two);
  for (std::size_t l = 0; l < one.layer_count(); ++l) {
    auto a = one.values(l);
    auto b = two.values(l);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(2.0 * a[i]).epsilon(1e-14));
  }
}

TEST_CASE("GradientBuffer clear zeroes touched spans") {
  const CDModel m = small_model(5);
  GradientBuffer g(m.parameters());
  m.accumulate_gradient({1, 2, 1}, g);
  CHECK(!g.touched().empty());
  g.clear();
  CHECK(g.touched().empty());
  CHECK(static_cast<const LayeredArray&>(g) == m.parameters().zeros_like());
}

TEST_CASE("accumulate_sq_grads") {
  const CDModel m = small_model(6);
  SUBCASE("identical records give one record's squared gradient") {
    const ResponseRecord r{3, 4, 1};
    const std::vector<ResponseRecord> records(7, r);
    const LayeredArray got = accumulate_sq_grads(m, records);
    const LayeredArray g = testing::single_gradient(m, r);
    LayeredArray expected = g;
    for (std::size_t l = 0; l < expected.layer_count(); ++l) {
      for (auto& v : expected.values(l)) v *= v;
    }
    CHECK(testing::max_relative_error(got, expected, 1e-300) < 1e-12);
  }
  SUBCASE("matches the per-example brute force") {
    Rng rng(10);
    const auto records = testing::random_records(200, 5, 6, rng);
    const LayeredArray got = accumulate_sq_grads(m, records);
    const LayeredArray expected = testing::brute_force_sq_grads(m, records);
    CHECK(testing::max_relative_error(got, expected, 1e-300) < 1e-10);
    for (const auto& layer : got.layers()) {
      for (double v : layer.values) CHECK(v >= 0.0);
    }
  }
  SUBCASE("untouched rows are exactly zero") {
    const std::vector<ResponseRecord> records{{0, 0, 1}, {0, 1, 0}, {1, 0, 1}};
    const LayeredArray got = accumulate_sq_grads(m, records);
    auto student = got.values("student_emb");
    const std::size_t d = m.config().embed_dim;
    for (std::size_t s = 2; s < 5; ++s) {
      for (std::size_t k = 0; k < d; ++k) CHECK(student[s * d + k] == 0.0);
    }
  }
  SUBCASE("empty dataset") {
    CHECK_THROWS_AS(accumulate_sq_grads(m, std::vector<ResponseRecord>{}), ValidationError);
  }
}

TEST_CASE("mean_gradient and mean_loss agree with single-record sums") {
  const CDModel m = small_model(7);
  Rng rng(2);
  const auto records = testing::random_records(20, 5, 6, rng);
  double loss = 0.0;
  LayeredArray sum = m.parameters().zeros_like();
  for (const auto& r : records) {
    loss += m.loss(r);
    const LayeredArray g = testing::single_gradient(m, r);
    for (std::size_t l = 0; l < sum.layer_count(); ++l) {
      auto s = sum.values(l);
      auto gl = g.values(l);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += gl[i] / 20.0;
    }
  }
  CHECK(mean_loss(m, records) == doctest::Approx(loss / 20.0).epsilon(1e-12));
  CHECK(testing::max_relative_error(mean_gradient(m, records), sum, 1e-12) < 1e-10);
}
