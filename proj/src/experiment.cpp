#include "cdu/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

#include "cdu/metrics.hpp"
#include "cdu/rng.hpp"

namespace cdu {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw ValidationError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read(const json& j, std::string_view key, T& out, std::string_view where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError("bad value for '" + std::string(key) + "' in " + std::string(where));
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ValidationError("unknown optimizer '" + std::string(name) + "'");
}

std::string model_tag(Algorithm algo) { return "m_" + std::string(to_string(algo)); }

}  // namespace

std::string_view to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::hif: return "hif";
    case Algorithm::fim: return "fim";
    case Algorithm::gradasc: return "gradasc";
    case Algorithm::hessian: break;
  }
  return "hessian";
}

Algorithm algorithm_from_string(std::string_view name) {
  for (Algorithm a : {Algorithm::hif, Algorithm::fim, Algorithm::gradasc, Algorithm::hessian}) {
    if (to_string(a) == name) return a;
  }
  throw ValidationError("unknown algorithm '" + std::string(name) + "' (expected hif, fim, gradasc or hessian)");
}

// ---------------------------------------------------------------------------
// config

void ExperimentConfig::validate(bool check_files) const {
  if (responses.empty() || qmatrix.empty()) throw ValidationError("data.responses and data.qmatrix are required");
  if (check_files) {
    for (const auto& p : {responses, qmatrix}) {
      if (!std::filesystem::is_regular_file(p)) throw ValidationError("data file not found: " + p.string());
    }
  }
  for (double r : {split.train, split.valid, split.test}) {
    if (!(r > 0.0 && r <= 1.0)) throw ValidationError("split ratios must lie in (0, 1]");
  }
  if (std::abs(split.train + split.valid + split.test - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
  if (!(unlearning_ratio > 0.0 && unlearning_ratio <= 1.0 / 3.0)) {
    throw ValidationError("unlearning_ratio must lie in (0, 1/3]");
  }
  if (!(arch.dropout >= 0.0 && arch.dropout < 1.0)) throw ValidationError("model.dropout must lie in [0, 1)");
  if (arch.arch == Architecture::decoupled && arch.embed_dim == 0) throw ValidationError("model.embed_dim must be >= 1");
  train.validate();
  unlearn.hif.validate();
  if (!(unlearn.fim.alpha > 0.0) || !(unlearn.fim.lambda >= 0.0 && unlearn.fim.lambda <= 1.0)) {
    throw ValidationError("fim: alpha must be positive and lambda in [0, 1]");
  }
  if (!(unlearn.gradasc.lr >= 0.0)) throw ValidationError("gradasc.lr must be nonnegative");
  unlearn.hessian.validate();
  if (!(utility_tolerance >= 0.0)) throw ValidationError("utility_tolerance must be nonnegative");
  std::set<Algorithm> seen;
  for (Algorithm a : algorithms) {
    if (!seen.insert(a).second) throw ValidationError("algorithm listed twice: " + std::string(to_string(a)));
  }
}

void ExperimentConfig::sync_derived_seeds() { unlearn.hessian.seed = derive_seed(seeds.model, 2); }

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j,
             {"data", "split", "unlearning_ratio", "model", "training", "algorithms", "hif", "fim", "gradasc",
              "hessian", "seeds", "utility_tolerance", "output_dir"},
             "config");
  ExperimentConfig c;

  if (!j.contains("data")) throw ValidationError("config needs a 'data' section");
  const json& data = j.at("data");
  check_keys(data, {"responses", "qmatrix"}, "data");
  std::string responses, qmatrix;
  read(data, "responses", responses, "data");
  read(data, "qmatrix", qmatrix, "data");
  if (responses.empty() || qmatrix.empty()) throw ValidationError("data.responses and data.qmatrix are required");
  c.responses = resolve(base_dir, responses);
  c.qmatrix = resolve(base_dir, qmatrix);

  if (const auto it = j.find("split"); it != j.end()) {
    check_keys(*it, {"train", "valid", "test"}, "split");
    read(*it, "train", c.split.train, "split");
    read(*it, "valid", c.split.valid, "split");
    read(*it, "test", c.split.test, "split");
  }
  read(j, "unlearning_ratio", c.unlearning_ratio, "config");

  if (const auto it = j.find("model"); it != j.end()) {
    check_keys(*it, {"arch", "embed_dim", "ffn_hidden", "dropout"}, "model");
    std::string arch = std::string(to_string(c.arch.arch));
    read(*it, "arch", arch, "model");
    c.arch.arch = architecture_from_string(arch);
    read(*it, "embed_dim", c.arch.embed_dim, "model");
    read(*it, "ffn_hidden", c.arch.ffn_hidden, "model");
    read(*it, "dropout", c.arch.dropout, "model");
  }

  if (const auto it = j.find("training"); it != j.end()) {
    check_keys(*it, {"optimizer", "lr", "batch_size", "max_epochs", "patience"}, "training");
    std::string opt = c.train.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd";
    read(*it, "optimizer", opt, "training");
    c.train.optimizer.kind = optimizer_from_string(opt);
    read(*it, "lr", c.train.optimizer.lr, "training");
    read(*it, "batch_size", c.train.batch_size, "training");
    read(*it, "max_epochs", c.train.max_epochs, "training");
    read(*it, "patience", c.train.patience, "training");
  }

  if (const auto it = j.find("algorithms"); it != j.end()) {
    if (!it->is_array()) throw ValidationError("algorithms must be a list");
    for (const auto& a : *it) {
      if (!a.is_string()) throw ValidationError("algorithm names must be strings");
      c.algorithms.push_back(algorithm_from_string(a.get<std::string>()));
    }
  }

  if (const auto it = j.find("hif"); it != j.end()) {
    check_keys(*it, {"alpha", "lambda", "beta", "excluded_layers"}, "hif");
    read(*it, "alpha", c.unlearn.hif.alpha, "hif");
    read(*it, "lambda", c.unlearn.hif.lambda, "hif");
    read(*it, "beta", c.unlearn.hif.beta, "hif");
    read(*it, "excluded_layers", c.unlearn.hif.excluded_layers, "hif");
  }
  if (const auto it = j.find("fim"); it != j.end()) {
    check_keys(*it, {"alpha", "lambda"}, "fim");
    read(*it, "alpha", c.unlearn.fim.alpha, "fim");
    read(*it, "lambda", c.unlearn.fim.lambda, "fim");
  }
  if (const auto it = j.find("gradasc"); it != j.end()) {
    check_keys(*it, {"lr", "steps"}, "gradasc");
    read(*it, "lr", c.unlearn.gradasc.lr, "gradasc");
    read(*it, "steps", c.unlearn.gradasc.steps, "gradasc");
  }
  if (const auto it = j.find("hessian"); it != j.end()) {
    check_keys(*it, {"alpha", "lambda", "n_probe_samples", "n_batches", "batch_size"}, "hessian");
    read(*it, "alpha", c.unlearn.hessian.alpha, "hessian");
    read(*it, "lambda", c.unlearn.hessian.lambda, "hessian");
    read(*it, "n_probe_samples", c.unlearn.hessian.n_probe_samples, "hessian");
    read(*it, "n_batches", c.unlearn.hessian.n_batches, "hessian");
    read(*it, "batch_size", c.unlearn.hessian.batch_size, "hessian");
  }

  if (const auto it = j.find("seeds"); it != j.end()) {
    check_keys(*it, {"data", "model", "attack"}, "seeds");
    read(*it, "data", c.seeds.data, "seeds");
    read(*it, "model", c.seeds.model, "seeds");
    read(*it, "attack", c.seeds.attack, "seeds");
  }
  read(j, "utility_tolerance", c.utility_tolerance, "config");
  if (const auto it = j.find("output_dir"); it != j.end()) {
    std::string out;
    read(j, "output_dir", out, "config");
    if (!out.empty()) c.output_dir = resolve(base_dir, out);
  }
  c.sync_derived_seeds();
  c.validate(false);
  return c;
}

json ExperimentConfig::to_json() const {
  json algos = json::array();
  for (Algorithm a : algorithms) algos.push_back(to_string(a));
  return {
      {"data", {{"responses", responses.generic_string()}, {"qmatrix", qmatrix.generic_string()}}},
      {"split", {{"train", split.train}, {"valid", split.valid}, {"test", split.test}}},
      {"unlearning_ratio", unlearning_ratio},
      {"model",
       {{"arch", to_string(arch.arch)},
        {"embed_dim", arch.embed_dim},
        {"ffn_hidden", arch.ffn_hidden},
        {"dropout", arch.dropout}}},
      {"training",
       {{"optimizer", train.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd"},
        {"lr", train.optimizer.lr},
        {"batch_size", train.batch_size},
        {"max_epochs", train.max_epochs},
        {"patience", train.patience}}},
      {"algorithms", algos},
      {"hif",
       {{"alpha", unlearn.hif.alpha},
        {"lambda", unlearn.hif.lambda},
        {"beta", unlearn.hif.beta},
        {"excluded_layers", unlearn.hif.excluded_layers}}},
      {"fim", {{"alpha", unlearn.fim.alpha}, {"lambda", unlearn.fim.lambda}}},
      {"gradasc", {{"lr", unlearn.gradasc.lr}, {"steps", unlearn.gradasc.steps}}},
      {"hessian",
       {{"alpha", unlearn.hessian.alpha},
        {"lambda", unlearn.hessian.lambda},
        {"n_probe_samples", unlearn.hessian.n_probe_samples},
        {"n_batches", unlearn.hessian.n_batches},
        {"batch_size", unlearn.hessian.batch_size}}},
      {"seeds", {{"data", seeds.data}, {"model", seeds.model}, {"attack", seeds.attack}}},
      {"utility_tolerance", utility_tolerance},
  };
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return ExperimentConfig::from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// reports

json ModelEntry::to_json() const {
  json j = {{"tag", tag},
            {"utility_auc", utility_auc},
            {"utility_acc", utility_acc},
            {"mia_auc", mia.mia_auc},
            {"mia_acc", mia.mia_acc},
            {"mia_n_positive", mia.n_positive},
            {"mia_n_negative", mia.n_negative}};
  j["parameters_modified"] = parameters_modified ? json(*parameters_modified) : json(nullptr);
  j["epochs"] = epochs ? json(*epochs) : json(nullptr);
  j["unlearn_config"] = unlearn_config.is_null() ? json(nullptr) : unlearn_config;
  return j;
}

json ModelEntry::timing_json() const {
  return {{"tag", tag}, {"wall_time_seconds", wall_time_seconds}, {"rtrr", rtrr ? json(*rtrr) : json(nullptr)}};
}

const ModelEntry& ExperimentReport::entry(std::string_view tag) const {
  for (const auto& m : models) {
    if (m.tag == tag) return m;
  }
  throw ValidationError("report has no entry '" + std::string(tag) + "'");
}

json ExperimentReport::to_json() const {
  json models_json = json::array();
  for (const auto& m : models) models_json.push_back(m.to_json());
  return {{"schema_version", kReportSchemaVersion},
          {"software_version", kSoftwareVersion},
          {"seeds", {{"data", seeds.data}, {"model", seeds.model}, {"attack", seeds.attack}}},
          {"config", config},
          {"dataset", dataset},
          {"models", models_json}};
}

json ExperimentReport::timing_json() const {
  json models_json = json::array();
  for (const auto& m : models) models_json.push_back(m.timing_json());
  return {{"schema_version", kReportSchemaVersion}, {"models", models_json}};
}

// ---------------------------------------------------------------------------
// context

ExperimentContext::ExperimentContext(ExperimentConfig config) : config_(std::move(config)) {
  config_.validate();
  try {
    dataset_ = load_dataset(config_.responses, config_.qmatrix);
    const RecordSplit split = split_records(dataset_, config_.split, derive_seed(config_.seeds.data, 0));
    partition_ = partition_students(dataset_, config_.unlearning_ratio, derive_seed(config_.seeds.data, 1));
    if (partition_.forget.empty()) throw ValidationError("unlearning ratio selects no students");
    splits_ = derive_mia_subsets(partition_, split);
    forget_set_ = splits_.forget_set();
    retain_set_ = splits_.retain_set();
    if (forget_set_.empty() || retain_set_.empty()) throw ValidationError("forget or retain set is empty");
    if (splits_.forget_test().empty() || splits_.nm_train_test().empty() || splits_.nm_eval_test().empty()) {
      throw ValidationError("an MIA test set is empty");
    }
    arch_ = config_.arch.sized_for(dataset_);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("data", e.what());
  }
}

void ExperimentContext::train_models() {
  try {
    std::vector<ResponseRecord> all = forget_set_;
    all.insert(all.end(), retain_set_.begin(), retain_set_.end());
    TrainResult orig = train(arch_, all, {}, dataset_.qmatrix, config_.train, config_.seeds.model);
    TrainResult retr = train(arch_, retain_set_, {}, dataset_.qmatrix, config_.train, config_.seeds.model);
    original_ = std::move(orig.model);
    original_time_ = orig.wall_time_seconds;
    original_epochs_ = orig.epochs_run;
    retrained_ = std::move(retr.model);
    retrain_time_ = retr.wall_time_seconds;
    retrain_epochs_ = retr.epochs_run;
  } catch (const std::exception& e) {
    throw StageError("train", e.what());
  }
  attacker_.reset();
  original_entry_.reset();
  retrained_entry_.reset();
}

void ExperimentContext::adopt_models(CDModel original, std::optional<CDModel> retrained, double retrain_wall_time) {
  if (original.config() != arch_) throw ValidationError("original model does not match the dataset/config");
  if (retrained && retrained->config() != arch_) throw ValidationError("retrained model does not match the dataset/config");
  original_ = std::move(original);
  retrained_ = std::move(retrained);
  retrain_time_ = retrain_wall_time;
  original_time_ = 0.0;
  original_epochs_ = retrain_epochs_ = 0;
  attacker_.reset();
  original_entry_.reset();
  retrained_entry_.reset();
}

void ExperimentContext::train_attack() {
  if (!original_) throw StageError("attack", "models must be trained before the attacker");
  try {
    // Attacker sees M_orig outputs on members (D_f_test) and non-member
    // training students only.
    const FeatureBatch pos = extract_features(*original_, splits_.forget_test(), Provenance::forget_test, "m_orig");
    const FeatureBatch neg = extract_features(*original_, splits_.nm_train_test(), Provenance::nm_train_test, "m_orig");
    attacker_ = train_attacker(pos, neg, config_.seeds.attack);

    ModelEntry o = evaluate("m_orig", *original_);
    o.wall_time_seconds = original_time_;
    o.epochs = original_epochs_;
    original_entry_ = std::move(o);
    if (retrained_) {
      ModelEntry r = evaluate("m_retrain", *retrained_);
      r.wall_time_seconds = retrain_time_;
      r.epochs = retrain_epochs_;
      retrained_entry_ = std::move(r);
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("attack", e.what());
  }
}

const CDModel& ExperimentContext::original() const {
  if (!original_) throw Error("M_orig is not available");
  return *original_;
}

const CDModel& ExperimentContext::retrained() const {
  if (!retrained_) throw Error("M_retrain is not available");
  return *retrained_;
}

const AttackClassifier& ExperimentContext::attacker() const {
  if (!attacker_) throw Error("attacker has not been trained");
  return *attacker_;
}

const ModelEntry& ExperimentContext::original_entry() const {
  if (!original_entry_) throw Error("M_orig has not been evaluated");
  return *original_entry_;
}

const ModelEntry& ExperimentContext::retrained_entry() const {
  if (!retrained_entry_) throw Error("M_retrain has not been evaluated");
  return *retrained_entry_;
}

ModelEntry ExperimentContext::evaluate(std::string tag, const CDModel& model) const {
  if (!attacker_) throw StageError("evaluate", "attacker training must precede model evaluation");
  try {
    ModelEntry e;
    e.tag = std::move(tag);
    const auto& test = splits_.retain_test();
    const std::vector<double> p = predict_all(model, test);
    std::vector<int> y;
    y.reserve(test.size());
    for (const auto& r : test) y.push_back(r.score);
    e.utility_auc = auc(p, y);
    e.utility_acc = acc(p, y, 0.5);
    e.mia = evaluate_attack(*attacker_, model, splits_.forget_test(), splits_.nm_eval_test(), e.tag);
    return e;
  } catch (const std::exception& ex) {
    throw StageError("evaluate", ex.what());
  }
}

UnlearnResult ExperimentContext::unlearn(Algorithm algo, const UnlearnSettings& s) const {
  if (!original_) throw StageError("unlearn:" + std::string(to_string(algo)), "M_orig is not available");
  try {
    switch (algo) {
      case Algorithm::hif: return hif_unlearn(*original_, forget_set_, retain_set_, s.hif);
      case Algorithm::fim: return fim_unlearn(*original_, forget_set_, retain_set_, s.fim.alpha, s.fim.lambda);
      case Algorithm::gradasc:
        return gradient_ascent_unlearn(*original_, forget_set_, s.gradasc.lr, s.gradasc.steps);
      case Algorithm::hessian: return hessian_unlearn(*original_, forget_set_, retain_set_, s.hessian);
    }
  } catch (const std::exception& e) {
    throw StageError("unlearn:" + std::string(to_string(algo)), e.what());
  }
  throw StageError("unlearn", "unknown algorithm");
}

ModelEntry ExperimentContext::run_algorithm(Algorithm algo, const UnlearnSettings& settings,
                                            std::optional<CDModel>* unlearned) const {
  UnlearnResult result = unlearn(algo, settings);
  ModelEntry e = evaluate(model_tag(algo), result.model);
  e.wall_time_seconds = result.report.wall_time_seconds;
  if (retrain_time_ > 0.0) e.rtrr = rtrr(result.report.wall_time_seconds, retrain_time_);
  e.parameters_modified = result.report.parameters_modified;
  e.unlearn_config = result.report.config;
  if (unlearned != nullptr) *unlearned = std::move(result.model);
  return e;
}

ExperimentReport ExperimentContext::base_report() const {
  ExperimentReport report;
  report.config = config_.to_json();
  report.seeds = config_.seeds;
  report.dataset = {{"records", dataset_.records.size()},
                    {"students", dataset_.n_students},
                    {"items", dataset_.n_items},
                    {"kcs", dataset_.qmatrix.kcs()},
                    {"forget_students", partition_.forget.size()},
                    {"nm_train_students", partition_.nm_train.size()},
                    {"nm_eval_students", partition_.nm_eval.size()},
                    {"retain_students", partition_.retain.size()},
                    {"forget_records", forget_set_.size()},
                    {"retain_records", retain_set_.size()}};
  report.models.push_back(original_entry());
  report.models.push_back(retrained_entry());
  return report;
}

// ---------------------------------------------------------------------------
// pipeline

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  const auto& out = config.output_dir;
  const auto write_status = [&](bool complete, const std::string& failed_stage) {
    if (out.empty()) return;
    json status = {{"complete", complete}};
    status["failed_stage"] = failed_stage.empty() ? json(nullptr) : json(failed_stage);
    write_json(out / "status.json", status);
  };
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_status(false, "");
  }

  try {
    ExperimentContext ctx(config);
    ctx.train_models();
    ctx.train_attack();
    ExperimentReport report = ctx.base_report();
    std::vector<std::pair<Algorithm, CDModel>> unlearned;
    for (Algorithm algo : config.algorithms) {
      std::optional<CDModel> model;
      report.models.push_back(ctx.run_algorithm(algo, config.unlearn, &model));
      unlearned.emplace_back(algo, std::move(*model));
    }

    if (!out.empty()) {
      try {
        save_checkpoint(out / "m_orig.ckpt", ctx.original().to_checkpoint());
        save_checkpoint(out / "m_retrain.ckpt", ctx.retrained().to_checkpoint());
        for (const auto& [algo, model] : unlearned) {
          save_checkpoint(out / (model_tag(algo) + ".ckpt"), model.to_checkpoint());
        }
        write_json(out / "report.json", report.to_json());
        write_json(out / "timing.json", report.timing_json());
      } catch (const std::exception& e) {
        throw StageError("write", e.what());
      }
      write_status(true, "");
    }
    return report;
  } catch (const StageError& e) {
    write_status(false, e.stage());
    throw;
  }
}

// ---------------------------------------------------------------------------
// sweep

SweepGrid SweepGrid::defaults(Algorithm algo) {
  SweepGrid g;
  g.algorithm = algo;
  const std::vector<double> alphas{1.3, 2.0, 2.5, 5.0};
  const std::vector<double> lambdas{0.1, 0.3, 0.5, 0.8};
  switch (algo) {
    case Algorithm::hif:
      g.alpha = alphas;
      g.lambda = lambdas;
      g.beta = {0.02, 0.05, 0.1, 0.3, 0.5};
      break;
    case Algorithm::fim:
      g.alpha = alphas;
      g.lambda = lambdas;
      break;
    case Algorithm::gradasc:
      g.lr = {1e-5, 5e-5, 1e-4};
      g.steps = {1, 3, 5};
      break;
    case Algorithm::hessian:
      g.alpha = alphas;
      g.lambda = lambdas;
      g.n_batches = {1, 2};
      break;
  }
  return g;
}

SweepGrid SweepGrid::from_json(Algorithm algo, const json& j) {
  SweepGrid g = defaults(algo);
  check_keys(j, {"alpha", "lambda", "beta", "lr", "steps", "n_batches"}, "grid");
  const auto axis = [&](std::string_view key, auto& values, bool used) {
    if (!j.contains(key)) return;
    if (!used) {
      throw ValidationError("grid axis '" + std::string(key) + "' does not apply to " + std::string(to_string(algo)));
    }
    read(j, key, values, "grid");
  };
  const bool attenuating = algo != Algorithm::gradasc;
  axis("alpha", g.alpha, attenuating);
  axis("lambda", g.lambda, attenuating);
  axis("beta", g.beta, algo == Algorithm::hif);
  axis("lr", g.lr, algo == Algorithm::gradasc);
  axis("steps", g.steps, algo == Algorithm::gradasc);
  axis("n_batches", g.n_batches, algo == Algorithm::hessian);
  return g;
}

std::size_t SweepGrid::size() const {
  switch (algorithm) {
    case Algorithm::hif: return alpha.size() * lambda.size() * beta.size();
    case Algorithm::fim: return alpha.size() * lambda.size();
    case Algorithm::gradasc: return lr.size() * steps.size();
    case Algorithm::hessian: break;
  }
  return alpha.size() * lambda.size() * n_batches.size();
}

std::vector<SweepSetting> SweepGrid::expand(const UnlearnSettings& base) const {
  if (size() == 0) throw ValidationError("sweep grid is empty");
  std::vector<SweepSetting> out;
  out.reserve(size());
  switch (algorithm) {
    case Algorithm::hif:
      for (double a : alpha)
        for (double l : lambda)
          for (double b : beta) {
            SweepSetting s{{{"alpha", a}, {"lambda", l}, {"beta", b}}, base};
            s.settings.hif.alpha = a;
            s.settings.hif.lambda = l;
            s.settings.hif.beta = b;
            out.push_back(std::move(s));
          }
      break;
    case Algorithm::fim:
      for (double a : alpha)
        for (double l : lambda) {
          SweepSetting s{{{"alpha", a}, {"lambda", l}}, base};
          s.settings.fim = {a, l};
          out.push_back(std::move(s));
        }
      break;
    case Algorithm::gradasc:
      for (double r : lr)
        for (std::size_t n : steps) {
          SweepSetting s{{{"lr", r}, {"steps", n}}, base};
          s.settings.gradasc = {r, n};
          out.push_back(std::move(s));
        }
      break;
    case Algorithm::hessian:
      for (double a : alpha)
        for (double l : lambda)
          for (std::size_t nb : n_batches) {
            SweepSetting s{{{"alpha", a}, {"lambda", l}, {"n_batches", nb}}, base};
            s.settings.hessian.alpha = a;
            s.settings.hessian.lambda = l;
            s.settings.hessian.n_batches = nb;
            out.push_back(std::move(s));
          }
      break;
  }
  return out;
}

std::optional<std::size_t> select_best(const ModelEntry& original, const ModelEntry& retrained,
                                       std::span<const SweepPoint> points, double utility_tolerance) {
  std::optional<std::size_t> best;
  double best_gap = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& e = points[i].entry;
    if (!(e.utility_auc >= original.utility_auc - utility_tolerance)) continue;
    const double gap = std::abs(e.mia.mia_auc - retrained.mia.mia_auc);
    if (!best || gap < best_gap) {
      best = i;
      best_gap = gap;
    }
  }
  return best;
}

json SweepResult::to_json() const {
  json pts = json::array();
  for (std::size_t i = 0; i < points.size(); ++i) {
    json p = points[i].entry.to_json();
    p["params"] = points[i].params;
    p["wall_time_seconds"] = points[i].entry.wall_time_seconds;
    p["rtrr"] = points[i].entry.rtrr ? json(*points[i].entry.rtrr) : json(nullptr);
    p["feasible"] = points[i].entry.utility_auc >= original.utility_auc - utility_tolerance;
    pts.push_back(std::move(p));
  }
  json best_json = nullptr;
  if (best) {
    best_json = {{"index", *best},
                 {"params", points[*best].params},
                 {"mia_gap", std::abs(points[*best].entry.mia.mia_auc - retrained.mia.mia_auc)}};
  }
  return {{"schema_version", kReportSchemaVersion},
          {"software_version", kSoftwareVersion},
          {"algorithm", to_string(algorithm)},
          {"utility_tolerance", utility_tolerance},
          {"m_orig", original.to_json()},
          {"m_retrain", retrained.to_json()},
          {"points", pts},
          {"best", best_json}};
}

SweepResult sweep(const ExperimentContext& context, const SweepGrid& grid) {
  SweepResult result;
  result.algorithm = grid.algorithm;
  result.original = context.original_entry();
  result.retrained = context.retrained_entry();
  result.utility_tolerance = context.config().utility_tolerance;
  for (auto& setting : grid.expand(context.config().unlearn)) {
    result.points.push_back({setting.params, context.run_algorithm(grid.algorithm, setting.settings)});
  }
  result.best = select_best(result.original, result.retrained, result.points, result.utility_tolerance);
  return result;
}

SweepResult sweep(const ExperimentConfig& config, const SweepGrid& grid) {
  if (grid.size() == 0) throw ValidationError("sweep grid is empty");
  ExperimentContext ctx(config);
  ctx.train_models();
  ctx.train_attack();
  SweepResult result = sweep(ctx, grid);
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    write_json(config.output_dir / ("sweep_" + std::string(to_string(grid.algorithm)) + ".json"), result.to_json());
  }
  return result;
}

// ---------------------------------------------------------------------------
// profiles

std::vector<ProfileRow> export_profiles(const CDModel& model, std::span<const std::uint32_t> students) {
  std::vector<ProfileRow> rows;
  for (std::uint32_t s : students) {
    if (s >= model.config().n_students) {
      throw ValidationError("unknown student id " + std::to_string(s));
    }
    const std::vector<double> prof = model.proficiency(s);
    for (std::size_t k = 0; k < prof.size(); ++k) rows.push_back({s, k, prof[k]});
  }
  return rows;
}

void write_profiles_csv(const std::filesystem::path& path, std::span<const ProfileRow> rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "student_id,kc_index,proficiency\n";
  for (const auto& r : rows) out << r.student << ',' << r.kc << ',' << r.proficiency << '\n';
}

}  // namespace cdu
