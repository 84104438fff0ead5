#include "cdu/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <json.hpp>

#include "cdu/error.hpp"
#include "cdu/metrics.hpp"

namespace cdu {

namespace {

using json = nlohmann::json;

std::string ffn_weight_id(std::size_t l) { return "ffn_W" + std::to_string(l); }
std::string ffn_bias_id(std::size_t l) { return "ffn_b" + std::to_string(l); }

void fill_uniform(std::span<double> values, double bound, Rng& rng) {
  for (auto& v : values) v = rng.uniform(-bound, bound);
}

json config_to_json(const CDArchConfig& c) {
  return json{{"arch", std::string(to_string(c.arch))}, {"embed_dim", c.embed_dim}, {"ffn_hidden", c.ffn_hidden},
              {"dropout", c.dropout},  {"n_students", c.n_students}, {"n_items", c.n_items},
              {"n_kcs", c.n_kcs}};
}

CDArchConfig config_from_json(const json& j) {
  CDArchConfig c;
  c.arch = architecture_from_string(j.at("arch").get<std::string>());
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.ffn_hidden = j.at("ffn_hidden").get<std::vector<std::size_t>>();
  c.dropout = j.at("dropout").get<double>();
  c.n_students = j.at("n_students").get<std::size_t>();
  c.n_items = j.at("n_items").get<std::size_t>();
  c.n_kcs = j.at("n_kcs").get<std::size_t>();
  return c;
}

// Layer layout shared by initialisation and checkpoint validation.
LayeredArray layout_for(const CDArchConfig& c) {
  LayeredArray layout;
  if (c.arch == Architecture::decoupled) {
    layout.add_layer("student_emb", {c.n_students, c.embed_dim});
    layout.add_layer("exercise_emb", {c.n_items, c.embed_dim});
    layout.add_layer("kc_emb", {c.n_kcs, c.embed_dim});
    layout.add_layer("prof_bias", {c.n_kcs});
    layout.add_layer("diff_bias", {c.n_kcs});
  } else {
    layout.add_layer("student_emb", {c.n_students, c.n_kcs});
    layout.add_layer("exercise_emb", {c.n_items, c.n_kcs});
    layout.add_layer("exercise_disc", {c.n_items, 1});
  }
  std::size_t in = c.n_kcs;
  for (std::size_t l = 0; l <= c.ffn_hidden.size(); ++l) {
    const std::size_t out = l < c.ffn_hidden.size() ? c.ffn_hidden[l] : 1;
    layout.add_layer(ffn_weight_id(l), {out, in});
    layout.add_layer(ffn_bias_id(l), {out});
    in = out;
  }
  return layout;
}

}  // namespace

std::string_view to_string(Architecture arch) {
  return arch == Architecture::decoupled ? "decoupled" : "neuralcdm";
}

Architecture architecture_from_string(std::string_view name) {
  if (name == "decoupled") return Architecture::decoupled;
  if (name == "neuralcdm") return Architecture::neuralcdm;
  throw ValidationError("unknown architecture '" + std::string(name) + "'");
}

void CDArchConfig::validate() const {
  if (embed_dim == 0) throw ValidationError("embed_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  if (n_students == 0 || n_items == 0 || n_kcs == 0) throw ValidationError("model dimensions must be positive");
  for (auto h : ffn_hidden) {
    if (h == 0) throw ValidationError("FFN hidden widths must be positive");
  }
}

CDArchConfig CDArchConfig::sized_for(const Dataset& dataset) const {
  CDArchConfig c = *this;
  c.n_students = dataset.n_students;
  c.n_items = dataset.n_items;
  c.n_kcs = dataset.qmatrix.kcs();
  return c;
}

CDModel::CDModel(CDArchConfig config, QMatrix qmatrix, std::uint64_t seed)
    : config_(std::move(config)), qmatrix_(std::move(qmatrix)) {
  config_.validate();
  if (qmatrix_.items() != config_.n_items || qmatrix_.kcs() != config_.n_kcs) {
    throw ValidationError("Q-matrix shape does not match the model configuration");
  }
  params_ = ParamStore(layout_for(config_), seed);
  bind_layers();
  initialize(seed);
}

CDModel::CDModel(CDArchConfig config, QMatrix qmatrix, ParamStore params)
    : config_(std::move(config)), qmatrix_(std::move(qmatrix)), params_(std::move(params)) {
  config_.validate();
  if (qmatrix_.items() != config_.n_items || qmatrix_.kcs() != config_.n_kcs) {
    throw ValidationError("Q-matrix shape does not match the model configuration");
  }
  if (!params_.congruent(layout_for(config_))) {
    throw ValidationError("parameter layout does not match the model configuration");
  }
  bind_layers();
}

void CDModel::bind_layers() {
  student_ = params_.index_of("student_emb");
  exercise_ = params_.index_of("exercise_emb");
  if (config_.arch == Architecture::decoupled) {
    kc_ = params_.index_of("kc_emb");
    prof_bias_ = params_.index_of("prof_bias");
    diff_bias_ = params_.index_of("diff_bias");
  } else {
    disc_ = params_.index_of("exercise_disc");
  }
  ffn_w_.clear();
  ffn_b_.clear();
  for (std::size_t l = 0; l <= config_.ffn_hidden.size(); ++l) {
    ffn_w_.push_back(params_.index_of(ffn_weight_id(l)));
    ffn_b_.push_back(params_.index_of(ffn_bias_id(l)));
  }
}

void CDModel::initialize(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0));
  const bool decoupled = config_.arch == Architecture::decoupled;
  const double emb_fan_in = static_cast<double>(decoupled ? config_.embed_dim : config_.n_kcs);
  fill_uniform(params_.values(student_), 1.0 / std::sqrt(emb_fan_in), rng);
  fill_uniform(params_.values(exercise_), 1.0 / std::sqrt(emb_fan_in), rng);
  if (decoupled) {
    fill_uniform(params_.values(kc_), 1.0 / std::sqrt(emb_fan_in), rng);
  } else {
    fill_uniform(params_.values(disc_), 1.0, rng);
  }
  for (std::size_t l = 0; l < ffn_w_.size(); ++l) {
    const auto& shape = params_.layer(ffn_w_[l]).shape;
    fill_uniform(params_.values(ffn_w_[l]), 1.0 / std::sqrt(static_cast<double>(shape[1])), rng);
  }
  project_constraints();
}

void CDModel::project_constraints() {
  if (config_.arch != Architecture::neuralcdm) return;
  for (auto w : ffn_w_) {
    for (auto& v : params_.values(w)) v = std::max(v, 0.0);
  }
}

void CDModel::check_ids(std::uint32_t student, std::uint32_t item) const {
  if (student >= config_.n_students) {
    throw ValidationError("student id " + std::to_string(student) + " out of range");
  }
  if (item >= config_.n_items) throw ValidationError("item id " + std::to_string(item) + " out of range");
}

DropoutMasks CDModel::sample_dropout(Rng& rng) const {
  DropoutMasks masks;
  const double keep = 1.0 - config_.dropout;
  for (auto width : config_.ffn_hidden) {
    std::vector<double> m(width);
    for (auto& v : m) v = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    masks.hidden.push_back(std::move(m));
  }
  return masks;
}

ForwardCache CDModel::forward(std::uint32_t student, std::uint32_t item, const DropoutMasks* masks) const {
  check_ids(student, item);
  ForwardCache c;
  c.student = student;
  c.item = item;
  const std::size_t k_count = config_.n_kcs;
  const auto q_row = qmatrix_.row(item);
  std::vector<double> gap(k_count);
  c.proficiency.resize(k_count);
  c.difficulty.resize(k_count);

  if (config_.arch == Architecture::decoupled) {
    const std::size_t d = config_.embed_dim;
    const double* es = params_.values(student_).data() + student * d;
    const double* eq = params_.values(exercise_).data() + item * d;
    const double* kc = params_.values(kc_).data();
    const auto pb = params_.values(prof_bias_);
    const auto db = params_.values(diff_bias_);
    for (std::size_t k = 0; k < k_count; ++k) {
      double zp = pb[k];
      double zd = db[k];
      for (std::size_t j = 0; j < d; ++j) {
        zp += kc[k * d + j] * es[j];
        zd += kc[k * d + j] * eq[j];
      }
      c.proficiency[k] = sigmoid(zp);
      c.difficulty[k] = sigmoid(zd);
      gap[k] = (c.proficiency[k] - c.difficulty[k]) * q_row[k];
    }
  } else {
    const double* theta = params_.values(student_).data() + student * k_count;
    const double* diff = params_.values(exercise_).data() + item * k_count;
    c.discrimination = sigmoid(params_.values(disc_)[item]);
    for (std::size_t k = 0; k < k_count; ++k) {
      c.proficiency[k] = sigmoid(theta[k]);
      c.difficulty[k] = sigmoid(diff[k]);
      gap[k] = q_row[k] * (c.proficiency[k] - c.difficulty[k]) * c.discrimination;
    }
  }
  c.inputs.push_back(std::move(gap));
  if (masks != nullptr) c.masks = *masks;
  ffn_forward(c);
  c.valid = true;
  return c;
}

void CDModel::ffn_forward(ForwardCache& c) const {
  const std::size_t n_hidden = config_.ffn_hidden.size();
  const bool dropout = !c.masks.hidden.empty();
  for (std::size_t l = 0; l < n_hidden; ++l) {
    std::vector<double> h(config_.ffn_hidden[l]);
    dense_forward(params_.values(ffn_w_[l]), params_.values(ffn_b_[l]), c.inputs[l], h);
    for (auto& v : h) v = sigmoid(v);
    std::vector<double> next = h;
    if (dropout) {
      for (std::size_t i = 0; i < next.size(); ++i) next[i] *= c.masks.hidden[l][i];
    }
    c.hidden.push_back(std::move(h));
    c.inputs.push_back(std::move(next));
  }
  double z = 0.0;
  dense_forward(params_.values(ffn_w_[n_hidden]), params_.values(ffn_b_[n_hidden]), c.inputs[n_hidden],
                std::span(&z, 1));
  c.probability = sigmoid(z);
}

void CDModel::backward(const ForwardCache& c, double dloss_dlogit, GradientBuffer& grad) const {
  if (!c.valid) throw ValidationError("backward called without a forward cache");
  if (!grad.congruent(params_)) throw ValidationError("gradient buffer does not match the model");
  const std::size_t n_hidden = config_.ffn_hidden.size();
  const bool dropout = !c.masks.hidden.empty();

  // Output layer, then hidden layers in reverse.
  std::vector<double> dy{dloss_dlogit};
  std::vector<double> dx(c.inputs[n_hidden].size());
  for (std::size_t l = n_hidden + 1; l-- > 0;) {
    const auto w = ffn_w_[l];
    const auto b = ffn_b_[l];
    grad.touch(w, 0, grad.layer(w).size());
    grad.touch(b, 0, grad.layer(b).size());
    dx.assign(c.inputs[l].size(), 0.0);
    dense_backward(params_.values(w), c.inputs[l], dy, grad.values(w), grad.values(b), dx);
    if (l == 0) break;
    const auto& h = c.hidden[l - 1];
    dy.resize(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double dh = dropout ? dx[i] * c.masks.hidden[l - 1][i] : dx[i];
      dy[i] = dh * h[i] * (1.0 - h[i]);
    }
  }
  const auto& dgap = dx;  // gradient w.r.t. the cognitive gap

  const std::size_t k_count = config_.n_kcs;
  const auto q_row = qmatrix_.row(c.item);
  if (config_.arch == Architecture::decoupled) {
    const std::size_t d = config_.embed_dim;
    const double* es = params_.values(student_).data() + c.student * d;
    const double* eq = params_.values(exercise_).data() + c.item * d;
    const double* kc = params_.values(kc_).data();
    double* g_es = grad.values(student_).data() + c.student * d;
    double* g_eq = grad.values(exercise_).data() + c.item * d;
    double* g_kc = grad.values(kc_).data();
    auto g_pb = grad.values(prof_bias_);
    auto g_db = grad.values(diff_bias_);
    for (std::size_t k = 0; k < k_count; ++k) {
      const double dp = dgap[k] * q_row[k];
      const double dzp = dp * c.proficiency[k] * (1.0 - c.proficiency[k]);
      const double dzd = -dp * c.difficulty[k] * (1.0 - c.difficulty[k]);
      g_pb[k] += dzp;
      g_db[k] += dzd;
      for (std::size_t j = 0; j < d; ++j) {
        g_kc[k * d + j] += dzp * es[j] + dzd * eq[j];
        g_es[j] += dzp * kc[k * d + j];
        g_eq[j] += dzd * kc[k * d + j];
      }
    }
    grad.touch(student_, c.student * d, d);
    grad.touch(exercise_, c.item * d, d);
    grad.touch(kc_, 0, grad.layer(kc_).size());
    grad.touch(prof_bias_, 0, k_count);
    grad.touch(diff_bias_, 0, k_count);
  } else {
    double* g_theta = grad.values(student_).data() + c.student * k_count;
    double* g_diff = grad.values(exercise_).data() + c.item * k_count;
    double d_disc = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double masked = dgap[k] * q_row[k];
      const double dh_s = masked * c.discrimination;
      g_theta[k] += dh_s * c.proficiency[k] * (1.0 - c.proficiency[k]);
      g_diff[k] += -dh_s * c.difficulty[k] * (1.0 - c.difficulty[k]);
      d_disc += masked * (c.proficiency[k] - c.difficulty[k]);
    }
    grad.values(disc_)[c.item] += d_disc * c.discrimination * (1.0 - c.discrimination);
    grad.touch(student_, c.student * k_count, k_count);
    grad.touch(exercise_, c.item * k_count, k_count);
    grad.touch(disc_, c.item, 1);
  }
}

double CDModel::predict(std::uint32_t student, std::uint32_t item) const {
  return forward(student, item).probability;
}

std::vector<double> CDModel::proficiency(std::uint32_t student) const {
  // Shares forward()'s code path; item 0 only feeds the FFN, not p_s.
  return forward(student, 0).proficiency;
}

double CDModel::loss(const ResponseRecord& record) const {
  return bce_loss(predict(record.student, record.item), record.score);
}

double CDModel::accumulate_gradient(const ResponseRecord& record, GradientBuffer& grad) const {
  const ForwardCache c = forward(record.student, record.item);
  backward(c, bce_logit_grad(c.probability, record.score), grad);
  return bce_loss(c.probability, record.score);
}

Checkpoint CDModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.tag = std::string(to_string(config_.arch));
  ckpt.metadata = config_to_json(config_).dump();
  ckpt.seed = params_.seed();
  ckpt.layers = params_;
  return ckpt;
}

CDModel CDModel::from_checkpoint(const Checkpoint& ckpt, QMatrix qmatrix) {
  CDArchConfig config;
  try {
    config = config_from_json(json::parse(ckpt.metadata));
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what(), 0);
  }
  if (ckpt.tag != to_string(config.arch)) throw ParseError("checkpoint tag does not match its metadata", 0);
  return CDModel(std::move(config), std::move(qmatrix), ParamStore(ckpt.layers, ckpt.seed));
}

double predict(const CDModel& model, std::uint32_t student, std::uint32_t item) {
  return model.predict(student, item);
}

double predict_neuralcdm(const CDModel& model, std::uint32_t student, std::uint32_t item) {
  if (model.config().arch != Architecture::neuralcdm) throw ValidationError("model is not a NeuralCDM");
  return model.predict(student, item);
}

std::vector<double> proficiency(const CDModel& model, std::uint32_t student) {
  return model.proficiency(student);
}

std::vector<double> predict_all(const CDModel& model, std::span<const ResponseRecord> records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(model.predict(r.student, r.item));
  return out;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (max_epochs == 0) throw ValidationError("max_epochs must be positive");
  if (!(optimizer.lr > 0.0)) throw ValidationError("learning rate must be positive");
}

namespace {

// Validation score for early stopping: AUC, or negative loss when the
// validation labels are single-class.
double validation_score(const CDModel& model, std::span<const ResponseRecord> valid) {
  const auto scores = predict_all(model, valid);
  std::vector<int> labels;
  labels.reserve(valid.size());
  for (const auto& r : valid) labels.push_back(r.score);
  const bool both = std::find(labels.begin(), labels.end(), 0) != labels.end() &&
                    std::find(labels.begin(), labels.end(), 1) != labels.end();
  if (both) return auc(scores, labels);
  double loss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) loss += bce_loss(scores[i], labels[i]);
  return -loss / static_cast<double>(scores.size());
}

}  // namespace

TrainResult train(const CDArchConfig& config, std::span<const ResponseRecord> train_records,
                  std::span<const ResponseRecord> valid_records, const QMatrix& qmatrix,
                  const TrainConfig& hyper, std::uint64_t seed) {
  if (train_records.empty()) throw ValidationError("cannot train on an empty training set");
  hyper.validate();
  const auto start = std::chrono::steady_clock::now();

  TrainResult result{CDModel(config, qmatrix, seed), 0.0, 0, 0, std::nullopt, {}};
  CDModel& model = result.model;
  Optimizer optimizer(hyper.optimizer, model.parameters());
  Rng rng(derive_seed(seed, 1));
  const bool use_dropout = config.dropout > 0.0;

  std::vector<std::size_t> order(train_records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  LayeredArray batch_grad = model.parameters().zeros_like();
  GradientBuffer example_grad(model.parameters());

  std::optional<ParamStore> best_params;
  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), begin + hyper.batch_size);
      batch_grad.fill(0.0);
      for (std::size_t i = begin; i < end; ++i) {
        const auto& r = train_records[order[i]];
        DropoutMasks masks;
        if (use_dropout) masks = model.sample_dropout(rng);
        const ForwardCache cache = model.forward(r.student, r.item, use_dropout ? &masks : nullptr);
        epoch_loss += bce_loss(cache.probability, r.score);
        example_grad.clear();
        model.backward(cache, bce_logit_grad(cache.probability, r.score), example_grad);
        for (const auto& s : example_grad.touched()) {
          auto g = example_grad.values(s.layer);
          auto acc_values = batch_grad.values(s.layer);
          for (std::size_t k = s.offset; k < s.offset + s.length; ++k) acc_values[k] += g[k];
        }
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (std::size_t l = 0; l < batch_grad.layer_count(); ++l) {
        for (auto& v : batch_grad.values(l)) v *= inv;
      }
      optimizer.step(model.mutable_parameters(), batch_grad);
      model.project_constraints();
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
    result.epochs_run = epoch;

    if (valid_records.empty()) {
      result.best_epoch = epoch;
      continue;
    }
    const double score = validation_score(model, valid_records);
    if (score > best_score) {
      best_score = score;
      best_params = model.parameters();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= hyper.patience) {
      break;
    }
  }
  if (best_params) {
    model.mutable_parameters() = std::move(*best_params);
    result.best_valid_auc = best_score;
  }
  result.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace cdu
