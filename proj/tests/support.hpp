#pragma once

// Shared fixtures and brute-force oracles for the test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "cdu/data.hpp"
#include "cdu/model.hpp"
#include "cdu/nn.hpp"
#include "cdu/rng.hpp"

namespace testing {

inline std::filesystem::path source_dir() { return CDU_SOURCE_DIR; }

/// Removes the directory on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() / ("cdu_test_" + name);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Random Q-matrix with every row nonempty.
inline cdu::QMatrix random_q(std::size_t items, std::size_t kcs, cdu::Rng& rng) {
  std::vector<std::vector<int>> rows(items, std::vector<int>(kcs, 0));
  for (auto& row : rows) {
    for (auto& v : row) v = rng.bernoulli(0.5) ? 1 : 0;
    row[rng.below(kcs)] = 1;
  }
  return cdu::QMatrix(rows);
}

inline cdu::CDArchConfig tiny_arch(cdu::Architecture arch, std::size_t students, std::size_t items, std::size_t kcs) {
  cdu::CDArchConfig c;
  c.arch = arch;
  c.embed_dim = 4;
  c.ffn_hidden = {5, 3};
  c.dropout = 0.2;
  c.n_students = students;
  c.n_items = items;
  c.n_kcs = kcs;
  return c;
}

inline std::vector<cdu::ResponseRecord> random_records(std::size_t n, std::size_t students, std::size_t items,
                                                       cdu::Rng& rng) {
  std::vector<cdu::ResponseRecord> out(n);
  for (auto& r : out) {
    r.student = static_cast<std::uint32_t>(rng.below(students));
    r.item = static_cast<std::uint32_t>(rng.below(items));
    r.score = rng.bernoulli(0.5) ? 1 : 0;
  }
  return out;
}

/// Central-difference gradient of model.loss(record) over every parameter.
inline cdu::LayeredArray finite_difference_gradient(const cdu::CDModel& model, const cdu::ResponseRecord& record,
                                                    double h = 1e-5) {
  cdu::CDModel probe = model;
  cdu::LayeredArray out = model.parameters().zeros_like();
  auto& params = probe.mutable_parameters();
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    auto theta = params.values(l);
    auto g = out.values(l);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double orig = theta[i];
      theta[i] = orig + h;
      const double up = probe.loss(record);
      theta[i] = orig - h;
      const double down = probe.loss(record);
      theta[i] = orig;
      g[i] = (up - down) / (2.0 * h);
    }
  }
  return out;
}

/// Dense single-record gradient from a fresh buffer.
inline cdu::LayeredArray single_gradient(const cdu::CDModel& model, const cdu::ResponseRecord& record) {
  cdu::GradientBuffer buf(model.parameters());
  model.accumulate_gradient(record, buf);
  return static_cast<const cdu::LayeredArray&>(buf);
}

/// Per-example brute force: mean over records of squared dense gradients.
inline cdu::LayeredArray brute_force_sq_grads(const cdu::CDModel& model,
                                              const std::vector<cdu::ResponseRecord>& records) {
  cdu::LayeredArray sum = model.parameters().zeros_like();
  for (const auto& r : records) {
    const cdu::LayeredArray g = single_gradient(model, r);
    for (std::size_t l = 0; l < sum.layer_count(); ++l) {
      auto s = sum.values(l);
      auto gl = g.values(l);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += gl[i] * gl[i];
    }
  }
  for (std::size_t l = 0; l < sum.layer_count(); ++l) {
    for (auto& v : sum.values(l)) v /= static_cast<double>(records.size());
  }
  return sum;
}

/// Largest |a - b| / max(|a|, |b|, floor) over all entries.
inline double max_relative_error(const cdu::LayeredArray& a, const cdu::LayeredArray& b, double floor) {
  double worst = 0.0;
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    auto x = a.values(l);
    auto y = b.values(l);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double scale = std::max({std::abs(x[i]), std::abs(y[i]), floor});
      worst = std::max(worst, std::abs(x[i] - y[i]) / scale);
    }
  }
  return worst;
}

/// O(n^2) Mann-Whitney pair count with half credit for ties.
inline double pair_count_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double num = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) num += 1.0;
      else if (scores[i] == scores[j]) num += 0.5;
    }
  }
  return num / pairs;
}

}  // namespace testing
