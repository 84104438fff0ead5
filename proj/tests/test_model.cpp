#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdu/error.hpp"
#include "cdu/metrics.hpp"
#include "cdu/model.hpp"
#include "support.hpp"

using namespace cdu;

namespace {

const Architecture kArchs[] = {Architecture::decoupled, Architecture::neuralcdm};

CDModel random_model(Architecture arch, std::uint64_t seed, std::size_t students = 6, std::size_t items = 7,
                     std::size_t kcs = 4) {
  Rng rng(seed);
  const QMatrix q = testing::random_q(items, kcs, rng);
  CDModel m(testing::tiny_arch(arch, students, items, kcs), q, seed);
  // Spread the parameters so that the check is not dominated by the linear regime.
  for (std::size_t l = 0; l < m.parameters().layer_count(); ++l) {
    for (auto& v : m.mutable_parameters().values(l)) v += rng.uniform(-0.5, 0.5);
  }
  m.project_constraints();
  return m;
}

void zero_all(CDModel& m) {
  for (std::size_t l = 0; l < m.parameters().layer_count(); ++l) {
    for (auto& v : m.mutable_parameters().values(l)) v = 0.0;
  }
}

double train_auc(const CDModel& m, const std::vector<ResponseRecord>& records) {
  std::vector<int> labels;
  for (const auto& r : records) labels.push_back(r.score);
  return auc(predict_all(m, records), labels);
}

}  // namespace

TEST_CASE("gradients match central finite differences") {
  for (Architecture arch : kArchs) {
    CAPTURE(to_string(arch));
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
      const CDModel m = random_model(arch, 100 + trial);
      Rng rng(trial);
      const ResponseRecord r{static_cast<std::uint32_t>(rng.below(6)), static_cast<std::uint32_t>(rng.below(7)),
                             static_cast<std::uint8_t>(rng.below(2))};
      const LayeredArray analytic = testing::single_gradient(m, r);
      const LayeredArray numeric = testing::finite_difference_gradient(m, r, 1e-5);
      worst = std::max(worst, testing::max_relative_error(analytic, numeric, 1e-5));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("gradient locality") {
  for (Architecture arch : kArchs) {
    const CDModel m = random_model(arch, 9);
    const ResponseRecord r{2, 5, 1};
    const LayeredArray g = testing::single_gradient(m, r);
    for (const char* id : {"student_emb", "exercise_emb"}) {
      const std::size_t row_owner = std::string(id) == "student_emb" ? r.student : r.item;
      const Layer& layer = g.layer(g.index_of(id));
      const std::size_t width = layer.shape[1];
      bool own_row_nonzero = false;
      for (std::size_t row = 0; row < layer.shape[0]; ++row) {
        for (std::size_t k = 0; k < width; ++k) {
          const double v = layer.values[row * width + k];
          if (row == row_owner) {
            own_row_nonzero = own_row_nonzero || v != 0.0;
          } else {
            CHECK(v == 0.0);
          }
        }
      }
      CHECK(own_row_nonzero);
    }
  }
}

TEST_CASE("Q-masking: untested KCs do not move the prediction") {
  const QMatrix q({{1, 0, 1}, {0, 1, 0}, {1, 1, 1}});
  CDModel m(testing::tiny_arch(Architecture::decoupled, 3, 3, 3), q, 5);
  std::vector<double> before;
  for (std::uint32_t s = 0; s < 3; ++s) before.push_back(m.predict(s, 0));
  // KC 1 is not required by item 0: shift its proficiency and difficulty.
  m.mutable_parameters().values("prof_bias")[1] += 3.0;
  m.mutable_parameters().values("diff_bias")[1] -= 2.0;
  for (std::uint32_t s = 0; s < 3; ++s) CHECK(m.predict(s, 0) == before[s]);
  // Item 1 does require KC 1.
  CDModel fresh(testing::tiny_arch(Architecture::decoupled, 3, 3, 3), q, 5);
  CHECK(m.predict(0, 1) != fresh.predict(0, 1));

  CDModel n(testing::tiny_arch(Architecture::neuralcdm, 3, 3, 3), q, 5);
  const double p = n.predict(1, 1);
  n.mutable_parameters().values("student_emb")[1 * 3 + 0] += 4.0;
  n.mutable_parameters().values("exercise_emb")[1 * 3 + 2] -= 4.0;
  CHECK(n.predict(1, 1) == p);
}

TEST_CASE("equal proficiency and difficulty give the same output for every item") {
  CDModel m = random_model(Architecture::decoupled, 12);
  auto student = m.mutable_parameters().values("student_emb");
  auto exercise = m.mutable_parameters().values("exercise_emb");
  const std::size_t d = m.config().embed_dim;
  for (std::size_t j = 0; j < m.config().n_items; ++j) {
    for (std::size_t k = 0; k < d; ++k) exercise[j * d + k] = student[k];
  }
  auto pb = m.mutable_parameters().values("prof_bias");
  auto db = m.mutable_parameters().values("diff_bias");
  std::copy(pb.begin(), pb.end(), db.begin());
  const double p0 = m.predict(0, 0);
  for (std::uint32_t j = 1; j < m.config().n_items; ++j) CHECK(m.predict(0, j) == p0);
}

TEST_CASE("proficiency") {
  SUBCASE("zero parameters give 0.5") {
    CDModel m = random_model(Architecture::decoupled, 1);
    zero_all(m);
    for (double v : m.proficiency(3)) CHECK(v == 0.5);
    CHECK(m.predict(3, 2) == 0.5);
  }
  SUBCASE("in (0, 1) and shared with forward") {
    for (Architecture arch : kArchs) {
      const CDModel m = random_model(arch, 2);
      for (std::uint32_t s = 0; s < 6; ++s) {
        const auto p = proficiency(m, s);
        CHECK(p.size() == 4);
        for (double v : p) {
          CHECK(v > 0.0);
          CHECK(v < 1.0);
        }
        CHECK(m.forward(s, 1).proficiency == p);
      }
    }
  }
  SUBCASE("out of range") {
    const CDModel m = random_model(Architecture::decoupled, 2);
    CHECK_THROWS_AS(m.proficiency(6), ValidationError);
    CHECK_THROWS_AS(m.predict(0, 7), ValidationError);
    CHECK_THROWS_AS(m.predict(6, 0), ValidationError);
  }
}

TEST_CASE("outputs stay in (0, 1) under extreme parameters") {
  for (Architecture arch : kArchs) {
    CDModel m = random_model(arch, 3);
    for (std::size_t l = 0; l < m.parameters().layer_count(); ++l) {
      for (auto& v : m.mutable_parameters().values(l)) v *= 30.0;
    }
    for (std::uint32_t s = 0; s < 6; ++s) {
      for (std::uint32_t j = 0; j < 7; ++j) {
        const double p = m.predict(s, j);
        CHECK(p > 0.0);
        CHECK(p < 1.0);
        CHECK(std::isfinite(m.loss({s, j, 1})));
      }
    }
  }
}

TEST_CASE("NeuralCDM variant") {
  SUBCASE("zero mastery and difficulty feed zero into the FFN") {
    CDModel m = random_model(Architecture::neuralcdm, 4);
    zero_all(m);
    m.mutable_parameters().values("ffn_b0")[0] = 0.3;
    const double p = m.predict(0, 0);
    for (std::uint32_t j = 1; j < 7; ++j) CHECK(m.predict(2, j) == p);
  }
  SUBCASE("projection clamps negative FFN weights") {
    CDModel m = random_model(Architecture::neuralcdm, 4);
    m.mutable_parameters().values("ffn_W1")[0] = -0.7;
    m.mutable_parameters().values("ffn_b1")[0] = -0.7;
    m.project_constraints();
    CHECK(m.parameters().values("ffn_W1")[0] == 0.0);
    CHECK(m.parameters().values("ffn_b1")[0] == -0.7);
  }
  SUBCASE("prediction is monotone in mastery of a required KC") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      CDModel m = random_model(Architecture::neuralcdm, 20 + seed);
      const std::uint32_t j = 3;
      std::size_t k = 0;
      while (m.qmatrix().at(j, k) == 0) ++k;
      auto theta = m.mutable_parameters().values("student_emb");
      double last = -1.0;
      for (int step = -40; step <= 40; ++step) {
        theta[1 * 4 + k] = 0.25 * step;
        const double p = predict_neuralcdm(m, 1, j);
        CHECK(p >= last);
        last = p;
      }
    }
  }
  SUBCASE("arch mismatch") {
    const CDModel m = random_model(Architecture::decoupled, 4);
    CHECK_THROWS_AS(predict_neuralcdm(m, 0, 0), ValidationError);
  }
  SUBCASE("trained weights stay nonnegative") {
    const CDModel m0 = random_model(Architecture::neuralcdm, 5);
    Rng rng(1);
    const auto records = testing::random_records(60, 6, 7, rng);
    TrainConfig hyper;
    hyper.max_epochs = 5;
    hyper.batch_size = 8;
    const auto result = train(m0.config(), records, {}, m0.qmatrix(), hyper, 3);
    for (std::size_t l = 0; l <= result.model.config().ffn_hidden.size(); ++l) {
      for (double v : result.model.parameters().values("ffn_W" + std::to_string(l))) CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("training recovers a planted model") {
  for (Architecture arch : kArchs) {
    CAPTURE(to_string(arch));
    const std::size_t students = 40, items = 12, kcs = 4;
    Rng rng(77);
    const QMatrix q = testing::random_q(items, kcs, rng);
    CDModel planted(testing::tiny_arch(arch, students, items, kcs), q, 8);
    for (std::size_t l = 0; l < planted.parameters().layer_count(); ++l) {
      for (auto& v : planted.mutable_parameters().values(l)) v *= 4.0;
    }
    planted.project_constraints();
    std::vector<double> probs;
    for (std::uint32_t s = 0; s < students; ++s) {
      for (std::uint32_t j = 0; j < items; ++j) probs.push_back(planted.predict(s, j));
    }
    std::vector<double> sorted = probs;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    std::vector<ResponseRecord> records;
    for (std::uint32_t s = 0; s < students; ++s) {
      for (std::uint32_t j = 0; j < items; ++j) {
        records.push_back({s, j, static_cast<std::uint8_t>(probs[s * items + j] > median ? 1 : 0)});
      }
    }
    // Labels threshold the planted probabilities, so the planted model ranks them perfectly.
    REQUIRE(train_auc(planted, records) == 1.0);

    CDArchConfig cfg = planted.config();
    cfg.dropout = 0.0;
    TrainConfig hyper;
    hyper.optimizer.lr = 0.02;
    hyper.batch_size = 32;
    hyper.max_epochs = 200;
    const auto result = train(cfg, records, {}, q, hyper, 1);
    CHECK(result.epochs_run == 200);
    CHECK(train_auc(result.model, records) > 0.95);
  }
}

TEST_CASE("full-batch training loss is non-increasing at small lr") {
  const CDModel base = random_model(Architecture::decoupled, 6);
  Rng rng(4);
  const auto records = testing::random_records(80, 6, 7, rng);
  CDArchConfig cfg = base.config();
  cfg.dropout = 0.0;
  TrainConfig hyper;
  hyper.optimizer = {OptimizerKind::sgd, 0.05};
  hyper.batch_size = records.size();
  hyper.max_epochs = 40;
  const auto result = train(cfg, records, {}, base.qmatrix(), hyper, 2);
  REQUIRE(result.epoch_losses.size() == 40);
  for (std::size_t e = 1; e < result.epoch_losses.size(); ++e) {
    CHECK(result.epoch_losses[e] <= result.epoch_losses[e - 1] + 1e-12);
  }
  CHECK(result.epoch_losses.back() < result.epoch_losses.front());
}

TEST_CASE("training is deterministic per seed") {
  const CDModel base = random_model(Architecture::decoupled, 7);
  Rng rng(5);
  const auto records = testing::random_records(100, 6, 7, rng);
  const auto valid = testing::random_records(30, 6, 7, rng);
  TrainConfig hyper;
  hyper.max_epochs = 6;
  hyper.batch_size = 16;
  const auto a = train(base.config(), records, valid, base.qmatrix(), hyper, 11);
  const auto b = train(base.config(), records, valid, base.qmatrix(), hyper, 11);
  const auto c = train(base.config(), records, valid, base.qmatrix(), hyper, 12);
  CHECK(encode_checkpoint(a.model.to_checkpoint()) == encode_checkpoint(b.model.to_checkpoint()));
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(a.model.parameters() != c.model.parameters());
  CHECK(a.best_valid_auc.has_value());
  CHECK(a.best_epoch >= 1);
  CHECK(a.best_epoch <= a.epochs_run);
}

TEST_CASE("train errors") {
  const CDModel base = random_model(Architecture::decoupled, 7);
  TrainConfig hyper;
  CHECK_THROWS_AS(train(base.config(), std::vector<ResponseRecord>{}, {}, base.qmatrix(), hyper, 1),
                  ValidationError);
  hyper.batch_size = 0;
  const std::vector<ResponseRecord> one{{0, 0, 1}};
  CHECK_THROWS_AS(train(base.config(), one, {}, base.qmatrix(), hyper, 1), ValidationError);
}

TEST_CASE("checkpoint round trip keeps layer ids and predictions") {
  for (Architecture arch : kArchs) {
    const CDModel m = random_model(arch, 8);
    const Checkpoint ckpt = m.to_checkpoint();
    CHECK(ckpt.tag == to_string(arch));
    const CDModel back = CDModel::from_checkpoint(decode_checkpoint(encode_checkpoint(ckpt)), m.qmatrix());
    CHECK(back.parameters() == m.parameters());
    CHECK(back.config() == m.config());
    for (std::size_t l = 0; l < m.parameters().layer_count(); ++l) {
      CHECK(back.parameters().layer(l).id == m.parameters().layer(l).id);
    }
    CHECK(back.predict(3, 4) == m.predict(3, 4));
  }
  SUBCASE("mismatched layout or Q-matrix") {
    const CDModel m = random_model(Architecture::decoupled, 8);
    Checkpoint ckpt = m.to_checkpoint();
    ckpt.tag = "neuralcdm";
    CHECK_THROWS(CDModel::from_checkpoint(ckpt, m.qmatrix()));
    CHECK_THROWS_AS(CDModel::from_checkpoint(m.to_checkpoint(), QMatrix({{1}, {1}})), ValidationError);
  }
}

TEST_CASE("architecture names") {
  CHECK(architecture_from_string("decoupled") == Architecture::decoupled);
  CHECK(architecture_from_string("neuralcdm") == Architecture::neuralcdm);
  CHECK_THROWS_AS(architecture_from_string("kscd"), ValidationError);
  CDArchConfig bad = testing::tiny_arch(Architecture::decoupled, 2, 2, 2);
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
