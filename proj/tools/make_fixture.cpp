// Writes a synthetic response log and Q-matrix drawn from a higher-order DINA model.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cdu/data.hpp"
#include "cdu/error.hpp"
#include "cdu/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a DINA response fixture"};
  std::string out = "data/frcsub_synth";
  std::size_t students = 536;
  std::size_t items = 0;
  std::size_t kcs = 0;
  std::size_t max_kcs = 3;
  double density = 1.0;
  std::uint64_t seed = 2024;
  app.add_option("--out", out, "Output directory");
  app.add_option("--students", students, "Number of students")->check(CLI::PositiveNumber);
  app.add_option("--items", items, "Items for a random Q-matrix (default: fraction-subtraction Q-matrix)");
  app.add_option("--kcs", kcs, "Knowledge components for a random Q-matrix");
  app.add_option("--max-kcs-per-item", max_kcs, "Upper bound on KCs per item for a random Q-matrix");
  app.add_option("--density", density, "Fraction of observed student-item pairs")->check(CLI::Range(0.0, 1.0));
  app.add_option("--seed", seed, "RNG seed");
  CLI11_PARSE(app, argc, argv);

  try {
    const cdu::QMatrix q = items == 0 ? cdu::fraction_subtraction_qmatrix()
                                      : cdu::random_qmatrix(items, kcs, std::min(max_kcs, kcs), seed ^ 0x51);
    cdu::DinaConfig config;
    config.n_students = students;
    config.density = density;
    config.seed = seed;
    const cdu::Dataset ds = cdu::generate_dina(q, config);
    std::filesystem::create_directories(out);
    cdu::write_responses(std::filesystem::path(out) / "responses.csv", ds.records);
    cdu::write_qmatrix(std::filesystem::path(out) / "qmatrix.csv", q);
    std::cout << ds.records.size() << " records, " << ds.n_students << " students, " << q.items() << " items, "
              << q.kcs() << " KCs\n";
  } catch (const cdu::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
