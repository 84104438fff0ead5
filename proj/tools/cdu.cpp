// Command-line front end for the unlearning experiments.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdu/checkpoint.hpp"
#include "cdu/experiment.hpp"
#include "cdu/shrinkage.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed_data;
  std::optional<std::uint64_t> seed_model;
  std::optional<std::uint64_t> seed_attack;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--config", opt.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed-data", opt.seed_data, "Override the data seed");
  cmd->add_option("--seed-model", opt.seed_model, "Override the model seed");
  cmd->add_option("--seed-attack", opt.seed_attack, "Override the attack seed");
  cmd->add_option("--out", opt.out, "Output directory (overrides output_dir)");
}

cdu::ExperimentConfig load_config(const CommonOptions& opt) {
  cdu::ExperimentConfig c = cdu::load_experiment_config(opt.config);
  if (opt.seed_data) c.seeds.data = *opt.seed_data;
  if (opt.seed_model) c.seeds.model = *opt.seed_model;
  if (opt.seed_attack) c.seeds.attack = *opt.seed_attack;
  c.sync_derived_seeds();
  if (!opt.out.empty()) c.output_dir = opt.out;
  if (c.output_dir.empty()) c.output_dir = "out";
  c.validate();
  return c;
}

cdu::CDModel load_model(const fs::path& path, const cdu::ExperimentContext& ctx) {
  cdu::CDModel model = cdu::CDModel::from_checkpoint(cdu::load_checkpoint(path), ctx.dataset().qmatrix);
  if (model.config() != ctx.arch()) {
    throw cdu::ValidationError("checkpoint " + path.string() + " does not match the configured model");
  }
  return model;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw cdu::ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw cdu::ValidationError(path.string() + " is not valid JSON: " + e.what());
  }
}

void print_entry(const cdu::ModelEntry& e) {
  std::cout << e.tag << ": utility_auc=" << e.utility_auc << " utility_acc=" << e.utility_acc
            << " mia_auc=" << e.mia.mia_auc << " mia_acc=" << e.mia.mia_acc;
  if (e.rtrr) std::cout << " rtrr=" << *e.rtrr << "%";
  std::cout << '\n';
}

int cmd_train(const CommonOptions& opt) {
  const auto config = load_config(opt);
  cdu::ExperimentContext ctx(config);
  ctx.train_models();
  fs::create_directories(config.output_dir);
  cdu::save_checkpoint(config.output_dir / "m_orig.ckpt", ctx.original().to_checkpoint());
  cdu::save_checkpoint(config.output_dir / "m_retrain.ckpt", ctx.retrained().to_checkpoint());
  cdu::write_json(config.output_dir / "train_timing.json", {{"t_retrain_seconds", ctx.retrain_wall_time()}});
  std::cout << "wrote m_orig.ckpt and m_retrain.ckpt to " << config.output_dir << '\n';
  return kExitOk;
}

int cmd_unlearn(const CommonOptions& opt, const std::string& algo_name, const std::string& model_path) {
  const auto config = load_config(opt);
  const cdu::Algorithm algo = cdu::algorithm_from_string(algo_name);
  cdu::ExperimentContext ctx(config);
  const fs::path source = model_path.empty() ? config.output_dir / "m_orig.ckpt" : fs::path(model_path);
  ctx.adopt_models(load_model(source, ctx), std::nullopt, 0.0);
  const cdu::UnlearnResult result = ctx.unlearn(algo, config.unlearn);
  const std::string tag = "m_" + std::string(cdu::to_string(algo));
  fs::create_directories(config.output_dir);
  cdu::save_checkpoint(config.output_dir / (tag + ".ckpt"), result.model.to_checkpoint());
  cdu::write_json(config.output_dir / ("unlearn_" + std::string(cdu::to_string(algo)) + ".json"),
                  {{"algorithm", result.report.algorithm},
                   {"parameters_modified", result.report.parameters_modified},
                   {"parameters_total", result.report.parameters_total},
                   {"wall_time_seconds", result.report.wall_time_seconds},
                   {"config", result.report.config}});
  std::cout << tag << ": " << result.report.parameters_modified << " of " << result.report.parameters_total
            << " parameters modified in " << result.report.wall_time_seconds << " s\n";
  return kExitOk;
}

int cmd_mia(const CommonOptions& opt, const std::vector<std::string>& models) {
  const auto config = load_config(opt);
  cdu::ExperimentContext ctx(config);
  const fs::path orig = config.output_dir / "m_orig.ckpt";
  const fs::path retrain = config.output_dir / "m_retrain.ckpt";
  std::optional<cdu::CDModel> retrained;
  if (fs::exists(retrain)) retrained = load_model(retrain, ctx);
  ctx.adopt_models(load_model(orig, ctx), std::move(retrained), 0.0);
  ctx.train_attack();

  json entries = json::array();
  entries.push_back(ctx.original_entry().to_json());
  print_entry(ctx.original_entry());
  if (ctx.has_retrained()) {
    entries.push_back(ctx.retrained_entry().to_json());
    print_entry(ctx.retrained_entry());
  }
  for (const auto& path : models) {
    const cdu::ModelEntry e = ctx.evaluate(fs::path(path).stem().string(), load_model(path, ctx));
    entries.push_back(e.to_json());
    print_entry(e);
  }
  cdu::write_json(config.output_dir / "mia.json", {{"schema_version", cdu::kReportSchemaVersion},
                                                   {"attacker", ctx.attacker().to_json()},
                                                   {"models", entries}});
  return kExitOk;
}

int cmd_run(const CommonOptions& opt, const std::vector<std::string>& algos) {
  auto config = load_config(opt);
  if (!algos.empty()) {
    config.algorithms.clear();
    for (const auto& a : algos) config.algorithms.push_back(cdu::algorithm_from_string(a));
    config.validate();
  }
  const cdu::ExperimentReport report = cdu::run_experiment(config);
  for (const auto& e : report.models) print_entry(e);
  std::cout << "report written to " << (config.output_dir / "report.json") << '\n';
  return kExitOk;
}

int cmd_sweep(const CommonOptions& opt, const std::string& algo_name, const std::string& grid_path) {
  const auto config = load_config(opt);
  const cdu::Algorithm algo = cdu::algorithm_from_string(algo_name);
  const cdu::SweepGrid grid =
      grid_path.empty() ? cdu::SweepGrid::defaults(algo) : cdu::SweepGrid::from_json(algo, read_json(grid_path));
  const cdu::SweepResult result = cdu::sweep(config, grid);
  print_entry(result.original);
  print_entry(result.retrained);
  std::cout << result.points.size() << " grid points evaluated\n";
  if (result.best) {
    std::cout << "best " << result.points[*result.best].params.dump() << '\n';
    print_entry(result.points[*result.best].entry);
  } else {
    std::cout << "no grid point keeps utility within tolerance\n";
  }
  return kExitOk;
}

struct ShrinkageOptions {
  std::size_t p = 50;
  double sigma = 1.0;
  double spread = 0.0;
  std::size_t trials = 20000;
  std::uint64_t seed = 0;
  std::vector<double> betas;
  std::string out = "shrinkage.csv";
};

int cmd_shrinkage(const ShrinkageOptions& opt) {
  cdu::ShrinkageScenario scenario;
  // True means evenly spaced over [-spread/2, spread/2].
  scenario.true_means.resize(opt.p);
  for (std::size_t i = 0; i < opt.p; ++i) {
    const double t = opt.p > 1 ? static_cast<double>(i) / static_cast<double>(opt.p - 1) - 0.5 : 0.0;
    scenario.true_means[i] = opt.spread * t;
  }
  scenario.noise_std = opt.sigma;
  scenario.trials = opt.trials;
  scenario.seed = opt.seed;
  scenario.validate();

  std::vector<double> betas = opt.betas;
  if (betas.empty()) {
    for (int i = 0; i <= 10; ++i) betas.push_back(i / 10.0);
  }
  const auto rows = cdu::shrinkage_sweep(scenario, betas);
  const fs::path out(opt.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  cdu::write_shrinkage_csv(out, rows);
  const double s = cdu::sum_sq_dev(scenario.true_means);
  std::cout << "optimal beta " << cdu::optimal_beta(opt.p, s, opt.sigma * opt.sigma) << "; wrote " << out << '\n';
  return kExitOk;
}

int cmd_profiles(const CommonOptions& opt, const std::vector<std::string>& models,
                 const std::vector<std::uint32_t>& students) {
  const auto config = load_config(opt);
  cdu::ExperimentContext ctx(config);
  std::vector<std::uint32_t> ids = students;
  if (ids.empty()) {
    for (std::uint32_t s = 0; s < ctx.dataset().n_students; ++s) ids.push_back(s);
  }
  std::vector<std::string> paths = models;
  if (paths.empty()) {
    for (const char* name : {"m_orig.ckpt", "m_retrain.ckpt"}) paths.push_back((config.output_dir / name).string());
  }
  fs::create_directories(config.output_dir);
  for (const auto& path : paths) {
    const auto rows = cdu::export_profiles(load_model(path, ctx), ids);
    const fs::path out = config.output_dir / ("profiles_" + fs::path(path).stem().string() + ".csv");
    cdu::write_profiles_csv(out, rows);
    std::cout << "wrote " << out << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Importance-guided unlearning for cognitive diagnosis models"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string algo;
  std::string model_path;
  std::string grid_path;
  std::vector<std::string> algos;
  std::vector<std::string> models;
  std::vector<std::uint32_t> students;
  ShrinkageOptions shrink;

  auto* train = app.add_subcommand("train", "Train M_orig and M_retrain and save checkpoints");
  add_common(train, common);

  auto* unlearn = app.add_subcommand("unlearn", "Apply one unlearning algorithm to M_orig");
  add_common(unlearn, common);
  unlearn->add_option("--algo", algo, "hif, fim, gradasc or hessian")->required();
  unlearn->add_option("--model", model_path, "Source checkpoint (default <out>/m_orig.ckpt)");

  auto* mia = app.add_subcommand("mia", "Train the attacker on M_orig and evaluate checkpoints");
  add_common(mia, common);
  mia->add_option("--model", models, "Extra checkpoints to evaluate");

  auto* run = app.add_subcommand("run", "Full pipeline: train, attack, unlearn, evaluate");
  add_common(run, common);
  run->add_option("--algo", algos, "Algorithms to run (overrides the config list)");

  auto* sweep = app.add_subcommand("sweep", "Grid search one algorithm's hyperparameters");
  add_common(sweep, common);
  sweep->add_option("--algo", algo, "hif, fim, gradasc or hessian")->required();
  sweep->add_option("--grid", grid_path, "JSON file with grid axes")->check(CLI::ExistingFile);

  auto* shrinkage = app.add_subcommand("simulate-shrinkage", "Monte-Carlo MSE of smoothed importance estimates");
  shrinkage->add_option("--p", shrink.p, "Layer size")->check(CLI::PositiveNumber);
  shrinkage->add_option("--sigma", shrink.sigma, "Noise standard deviation")->check(CLI::PositiveNumber);
  shrinkage->add_option("--spread", shrink.spread, "Range of the true means");
  shrinkage->add_option("--trials", shrink.trials, "Monte-Carlo trials")->check(CLI::PositiveNumber);
  shrinkage->add_option("--seed", shrink.seed, "RNG seed");
  shrinkage->add_option("--betas", shrink.betas, "Smoothing factors (default 0, 0.1, ..., 1)");
  shrinkage->add_option("--out", shrink.out, "Output CSV path");

  auto* profiles = app.add_subcommand("export-profiles", "Write per-KC proficiency CSVs");
  add_common(profiles, common);
  profiles->add_option("--model", models, "Checkpoints (default <out>/m_orig.ckpt and m_retrain.ckpt)");
  profiles->add_option("--students", students, "Dense student ids (default all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(common);
    if (*unlearn) return cmd_unlearn(common, algo, model_path);
    if (*mia) return cmd_mia(common, models);
    if (*run) return cmd_run(common, algos);
    if (*sweep) return cmd_sweep(common, algo, grid_path);
    if (*shrinkage) return cmd_shrinkage(shrink);
    if (*profiles) return cmd_profiles(common, models, students);
  } catch (const cdu::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const cdu::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const cdu::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
