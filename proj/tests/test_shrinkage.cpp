#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "cdu/error.hpp"
#include "cdu/shrinkage.hpp"
#include "support.hpp"

using namespace cdu;

namespace {

std::vector<double> spread_means(std::size_t p, double spread, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> mu(p);
  for (auto& m : mu) m = 1.0 + spread * rng.normal();
  return mu;
}

ShrinkageScenario scenario(std::vector<double> mu, double sigma, double beta, std::size_t trials, std::uint64_t seed) {
  ShrinkageScenario s;
  s.true_means = std::move(mu);
  s.noise_std = sigma;
  s.beta = beta;
  s.trials = trials;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("closed form") {
  CHECK(closed_form_mse(3, 4.0, 1.0, 0.5) == doctest::Approx(2.0).epsilon(1e-15));
  for (std::size_t p : {1u, 3u, 50u}) CHECK(closed_form_mse(p, 7.0, 2.0, 0.0) == 2.0 * p);
  const std::vector<double> mu{1.0, 2.0, 3.0};
  CHECK(sum_sq_dev(mu) == doctest::Approx(2.0));
  CHECK(closed_form_mse(mu, 1.0, 0.5) == closed_form_mse(3, sum_sq_dev(mu), 1.0, 0.5));
  // The two forms differ by the eps_i / layer-mean covariance term.
  for (double beta : {0.0, 0.3, 1.0}) {
    CHECK(exact_total_mse(3, 4.0, 1.0, beta) - closed_form_mse(3, 4.0, 1.0, beta) ==
          doctest::Approx(2.0 * beta * (1.0 - beta)).epsilon(1e-12));
  }
}

TEST_CASE("optimal beta") {
  CHECK(optimal_beta(3, 4.0, 1.0) == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(optimal_beta(3, std::numeric_limits<double>::infinity(), 1.0) == 0.0);
  CHECK(optimal_beta(3, 1e12, 1.0) < 1e-11);
  for (std::size_t p : {3u, 10u, 500u}) {
    CHECK(optimal_beta(p, 0.0, 2.5) == doctest::Approx(double(p) / double(p + 1)).epsilon(1e-15));
  }
  CHECK_THROWS_AS(optimal_beta(3, 4.0, 0.0), ValidationError);
  CHECK_THROWS_AS(optimal_beta(3, 4.0, -1.0), ValidationError);
  CHECK(exact_optimal_beta(3, 4.0, 1.0) == doctest::Approx(2.0 / 6.0));
}

TEST_CASE("numerical argmin of the closed form is the optimal beta") {
  for (double s : {0.0, 4.0, 30.0, 200.0}) {
    const std::size_t p = 20;
    double best = 0.0, best_val = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 1000; ++k) {
      const double beta = k / 1000.0;
      const double v = closed_form_mse(p, s, 1.0, beta);
      if (v < best_val) {
        best_val = v;
        best = beta;
      }
    }
    CHECK(std::abs(best - optimal_beta(p, s, 1.0)) <= 0.001);
  }
}

TEST_CASE("simulate_mse") {
  SUBCASE("beta 0 gives identical naive and adjusted errors") {
    const MseResult r = simulate_mse(scenario(spread_means(10, 1.0, 1), 1.0, 0.0, 500, 2));
    CHECK(r.mse_adjusted == r.mse_naive);
    CHECK(r.se_difference == 0.0);
  }
  SUBCASE("naive error is p sigma^2") {
    for (double sigma : {0.5, 1.0, 2.0}) {
      for (std::size_t p : {3u, 20u, 50u}) {
        const MseResult r = simulate_mse(scenario(spread_means(p, 2.0, p), sigma, 0.4, 4000, 7));
        CHECK(std::abs(r.mse_naive - double(p) * sigma * sigma) <= 4.0 * r.se_naive);
      }
    }
  }
  SUBCASE("homogeneous layer at the optimal beta") {
    const std::size_t p = 50;
    const double beta = optimal_beta(p, 0.0, 1.0);
    const MseResult r = simulate_mse(scenario(std::vector<double>(p, 0.0), 1.0, beta, 20000, 11));
    CHECK(r.mse_naive - r.mse_adjusted >= 5.0 * r.se_difference);
    CHECK(r.trials == 20000);
  }
  SUBCASE("matches the exact expected error") {
    for (double spread : {0.0, 0.5, 2.0}) {
      const auto mu = spread_means(12, spread, 3);
      for (int k = 0; k <= 10; ++k) {
        const double beta = k / 10.0;
        const MseResult r = simulate_mse(scenario(mu, 1.5, beta, 20000, 5));
        CHECK(std::abs(r.mse_adjusted - exact_total_mse(mu, 1.5, beta)) <= 4.0 * r.se_adjusted);
      }
    }
  }
  SUBCASE("deterministic per seed") {
    const auto s = scenario(spread_means(5, 1.0, 1), 1.0, 0.3, 200, 9);
    const MseResult a = simulate_mse(s), b = simulate_mse(s);
    CHECK(a.mse_adjusted == b.mse_adjusted);
    CHECK(a.se_naive == b.se_naive);
  }
  SUBCASE("invalid scenarios") {
    CHECK_THROWS_AS(simulate_mse(scenario({}, 1.0, 0.5, 10, 0)), ValidationError);
    CHECK_THROWS_AS(simulate_mse(scenario({1.0}, 0.0, 0.5, 10, 0)), ValidationError);
    CHECK_THROWS_AS(simulate_mse(scenario({1.0}, 1.0, 1.5, 10, 0)), ValidationError);
    CHECK_THROWS_AS(simulate_mse(scenario({1.0}, 1.0, 0.5, 0, 0)), ValidationError);
  }
}

TEST_CASE("smoothing helps inside (0, 2 beta*) and can hurt beyond it") {
  for (std::size_t p : {3u, 10u, 50u}) {
    for (double spread : {0.0, 0.5, 1.0}) {
      const auto mu = spread_means(p, spread, p + 17);
      const double star = optimal_beta(p, sum_sq_dev(mu), 1.0);
      for (double f : {0.25, 0.5, 1.0, 1.5}) {
        const double beta = std::min(1.0, f * star);
        CAPTURE(p);
        CAPTURE(spread);
        CAPTURE(beta);
        const MseResult r = simulate_mse(scenario(mu, 1.0, beta, 5000, 23));
        CHECK(r.mse_adjusted < r.mse_naive);
        CHECK(exact_total_mse(mu, 1.0, beta) < double(p));
      }
    }
  }
  // Heterogeneous layer: beta* is small, and full smoothing is far outside (0, 2 beta*).
  const auto mu = spread_means(10, 3.0, 4);
  const double star = optimal_beta(10, sum_sq_dev(mu), 1.0);
  REQUIRE(2.0 * star < 0.5);
  const MseResult r = simulate_mse(scenario(mu, 1.0, 1.0, 5000, 29));
  CHECK(r.mse_adjusted - r.mse_naive > 5.0 * r.se_difference);
}

TEST_CASE("recommend_beta") {
  CHECK_THROWS_AS(recommend_beta(std::vector<double>{1.0, 2.0}, 1.0), ValidationError);
  CHECK_THROWS_AS(recommend_beta(std::vector<double>{1.0, 2.0, 3.0}, 0.0), ValidationError);
  const BetaRecommendation flat = recommend_beta(std::vector<double>{0.4, 0.4, 0.4, 0.4}, 1.0);
  CHECK(flat.degenerate);
  CHECK(flat.beta == 1.0);
  CHECK(std::isinf(flat.raw));
  // Sum of squared deviations of {0, 1, 2} is 2; (3 - 2) * 1 / 2.
  const BetaRecommendation r = recommend_beta(std::vector<double>{0.0, 1.0, 2.0}, 1.0);
  CHECK_FALSE(r.degenerate);
  CHECK(r.raw == doctest::Approx(0.5));
  CHECK(recommend_beta(std::vector<double>{0.0, 0.1, 0.2}, 1.0).beta == 1.0);

  SUBCASE("planted layer at p = 500") {
    for (double spread : {0.3, 0.6, 1.0}) {
      const std::size_t p = 500;
      const auto mu = spread_means(p, spread, 8);
      Rng rng(9);
      std::vector<double> x(p);
      for (std::size_t i = 0; i < p; ++i) x[i] = mu[i] + rng.normal();
      const double target = optimal_beta(p, sum_sq_dev(mu), 1.0);
      const double got = recommend_beta(x, 1.0).beta;
      CAPTURE(spread);
      CHECK(std::abs(got - target) <= 0.25 * target);
    }
  }
  SUBCASE("from an importance map") {
    ImportanceMap imp;
    imp.values.add_layer("a", {3});
    imp.values.add_layer("b", {2});
    auto a = imp.values.values(0);
    a[0] = 0.0;
    a[1] = 1.0;
    a[2] = 2.0;
    CHECK(recommend_beta(imp, "a", 1.0).raw == doctest::Approx(0.5));
    CHECK_THROWS_AS(recommend_beta(imp, "b", 1.0), ValidationError);
    CHECK_THROWS_AS(recommend_beta(imp, "zzz", 1.0), ValidationError);
  }
}

TEST_CASE("FIM noise variance matches a per-record oracle") {
  Rng rng(3);
  const QMatrix q = testing::random_q(6, 3, rng);
  const CDModel m(testing::tiny_arch(Architecture::decoupled, 8, 6, 3), q, 2);
  const auto records = testing::random_records(60, 8, 6, rng);
  const std::size_t l = m.parameters().index_of("kc_emb");
  const std::size_t size = m.parameters().layer(l).size();
  std::vector<std::vector<double>> sq(size);
  for (const auto& r : records) {
    const LayeredArray g = testing::single_gradient(m, r);
    for (std::size_t i = 0; i < size; ++i) sq[i].push_back(g.values(l)[i] * g.values(l)[i]);
  }
  double total = 0.0;
  for (const auto& v : sq) {
    double mean = 0.0;
    for (double x : v) mean += x / double(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean) / double(v.size() - 1);
    total += var / double(v.size());
  }
  CHECK(estimate_fim_noise_variance(m, records, "kc_emb") == doctest::Approx(total / double(size)).epsilon(1e-9));
  CHECK_THROWS_AS(estimate_fim_noise_variance(m, std::vector<ResponseRecord>{records[0]}, "kc_emb"), ValidationError);
}

TEST_CASE("sweep csv") {
  const std::vector<double> betas{0.0, 0.5, 1.0};
  const auto rows = shrinkage_sweep(scenario(spread_means(4, 1.0, 1), 1.0, 0.0, 50, 3), betas);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].result.mse_naive == rows[2].result.mse_naive);
  CHECK(rows[1].beta == 0.5);
  testing::TempDir dir("shrinkage");
  write_shrinkage_csv(dir / "s.csv", rows);
  std::istringstream in(testing::read_bytes(dir / "s.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "beta,mse_naive,mse_adjusted,se_naive,se_adjusted");
  int n = 0;
  while (std::getline(in, line)) ++n;
  CHECK(n == 3);
  CHECK_THROWS_AS(shrinkage_sweep(scenario({1.0}, 1.0, 0.0, 5, 0), std::vector<double>{}), ValidationError);
}
