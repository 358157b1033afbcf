#include "qdm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qdm/error.hpp"
#include "qdm/evaluate.hpp"

namespace qdm {

// ---- enums -----------------------------------------------------------------

std::string to_string(Method m) {
  switch (m) {
    case Method::kQdm: return "QDM";
    case Method::kPlain: return "PLAIN";
    case Method::kSiamese: return "SIAMESE";
    case Method::kTriplet: return "TRIPLET";
    case Method::kOversample: return "OVERSAMPLE";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (n == "QDM" || n == "LSTM-QDM") return Method::kQdm;
  if (n == "PLAIN" || n == "LSTM") return Method::kPlain;
  if (n == "SIAMESE" || n == "LSTM-SIAM" || n == "SIAM") return Method::kSiamese;
  if (n == "TRIPLET") return Method::kTriplet;
  if (n == "OVERSAMPLE" || n == "OVERSAMPLE-LSTM") return Method::kOversample;
  throw ConfigError("unknown method '" + name + "' (expected QDM, PLAIN, SIAMESE, TRIPLET or OVERSAMPLE)");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam" || name == "ADAM") return OptimizerKind::kAdam;
  if (name == "sgd" || name == "SGD") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + name + "'");
}

// ---- TrainConfig -------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (class_count < 2) throw ConfigError("class_count must be at least 2");
  if (hidden_size == 0 || layer_count == 0 || embed_dim == 0) throw ConfigError("network sizes must be positive");
  if (embed_dim >= hidden_size) throw ConfigError("embed_dim must be smaller than hidden_size");
  if (optimizer == OptimizerKind::kAdam &&
      !(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.epsilon > 0))
    throw ConfigError("invalid Adam settings");
  if (method == Method::kQdm) loss.validate(!relaxed_loss_constraints);
  if (loss.beta < 0.0) throw ConfigError("beta must be nonnegative");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"method", to_string(method)},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"steps_per_epoch", steps_per_epoch},
          {"learning_rate", learning_rate},
          {"optimizer", to_string(optimizer)},
          {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}},
          {"seed", seed},
          {"loss",
           {{"M", loss.margin},
            {"M2", loss.minor_margin},
            {"lambda_pos", loss.lambda_pos},
            {"lambda_minor", loss.lambda_minor},
            {"beta", loss.beta}}},
          {"relaxed_loss_constraints", relaxed_loss_constraints},
          {"siamese_margin", siamese_margin},
          {"triplet_margin", triplet_margin},
          {"dropout", dropout},
          {"hidden_size", hidden_size},
          {"layer_count", layer_count},
          {"embed_dim", embed_dim},
          {"class_count", class_count},
          {"sigmoid_logits", sigmoid_logits},
          {"anchor_sampling", anchor_sampling == AnchorSampling::kUniformOverSamples ? "samples" : "classes"},
          {"patience", patience}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("steps_per_epoch", c.steps_per_epoch);
  get("learning_rate", c.learning_rate);
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
  }
  get("seed", c.seed);
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    c.loss.margin = l.value("M", c.loss.margin);
    c.loss.minor_margin = l.value("M2", c.loss.minor_margin);
    c.loss.lambda_pos = l.value("lambda_pos", c.loss.lambda_pos);
    c.loss.lambda_minor = l.value("lambda_minor", c.loss.lambda_minor);
    c.loss.beta = l.value("beta", c.loss.beta);
  }
  get("relaxed_loss_constraints", c.relaxed_loss_constraints);
  get("siamese_margin", c.siamese_margin);
  get("triplet_margin", c.triplet_margin);
  get("dropout", c.dropout);
  get("hidden_size", c.hidden_size);
  get("layer_count", c.layer_count);
  get("embed_dim", c.embed_dim);
  get("class_count", c.class_count);
  get("sigmoid_logits", c.sigmoid_logits);
  if (j.contains("anchor_sampling")) {
    const auto s = j.at("anchor_sampling").get<std::string>();
    if (s == "samples") c.anchor_sampling = AnchorSampling::kUniformOverSamples;
    else if (s == "classes") c.anchor_sampling = AnchorSampling::kUniformOverClasses;
    else throw ConfigError("anchor_sampling must be 'samples' or 'classes'");
  }
  get("patience", c.patience);
  return c;
}

std::string TrainConfig::hash() const {
  const std::string text = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

TrainConfig te_train_config() { return TrainConfig{}; }

TrainConfig cwru_train_config() {
  TrainConfig c;
  c.hidden_size = 30;
  c.layer_count = 3;
  c.dropout = 0.1;
  c.embed_dim = 15;
  c.class_count = 10;
  c.learning_rate = 5e-2;
  c.batch_size = 128;
  c.loss = QuadrupletLossConfig::cwru_defaults();
  c.siamese_margin = 5.0;
  return c;
}

nlohmann::json StepRecord::to_json() const {
  return {{"step", step}, {"epoch", epoch}, {"L_softmax", softmax}, {"L_pos", pos}, {"L_neg", neg},
          {"L_minor", minor}, {"L_metric", metric}, {"total", total}};
}

// ---- Optimizer -----------------------------------------------------------------

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, AdamSettings adam, const ModelParams& model)
    : kind_(kind), lr_(learning_rate), adam_(adam) {
  if (learning_rate < 0.0) throw ConfigError("learning rate must be nonnegative");
  for (const Tensor* p : model.parameters()) {
    m_.emplace_back(p->shape(), 0.0);
    if (kind == OptimizerKind::kAdam) v_.emplace_back(p->shape(), 0.0);
  }
}

void Optimizer::update(ModelParams& model, const GradientMap& grads) {
  auto params = model.parameters();
  if (params.size() != m_.size()) throw ContractError("optimizer state does not match the model");
  ++t_;
  const double bc1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[p];
    if (kind_ == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
      continue;
    }
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = adam_.beta1 * m[i] + (1.0 - adam_.beta1) * g[i];
      v[i] = adam_.beta2 * v[i] + (1.0 - adam_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr_ * m_hat / (std::sqrt(v_hat) + adam_.epsilon);
    }
  }
}

void Optimizer::save(Container& c, const std::string& prefix) const {
  c.header[prefix] = {{"kind", to_string(kind_)},
                      {"lr", lr_},
                      {"beta1", adam_.beta1},
                      {"beta2", adam_.beta2},
                      {"epsilon", adam_.epsilon},
                      {"t", t_}};
  for (std::size_t k = 0; k < m_.size(); ++k) c.put(prefix + ".m." + std::to_string(k), m_[k].buffer());
  for (std::size_t k = 0; k < v_.size(); ++k) c.put(prefix + ".v." + std::to_string(k), v_[k].buffer());
}

void Optimizer::load(const Container& c, const std::string& prefix, const ModelParams& model) {
  const auto& h = c.header.at(prefix);
  AdamSettings a{h.at("beta1").get<double>(), h.at("beta2").get<double>(), h.at("epsilon").get<double>()};
  *this = Optimizer(parse_optimizer(h.at("kind").get<std::string>()), h.at("lr").get<double>(), a, model);
  t_ = h.at("t").get<std::uint64_t>();
  for (std::size_t k = 0; k < m_.size(); ++k) m_[k] = Tensor(m_[k].shape(), c.f64(prefix + ".m." + std::to_string(k)));
  for (std::size_t k = 0; k < v_.size(); ++k) v_[k] = Tensor(v_[k].shape(), c.f64(prefix + ".v." + std::to_string(k)));
}

// ---- step ------------------------------------------------------------------------

namespace {

std::vector<int> labels_of(const WindowedDataset& ds, std::span<const std::size_t> idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = ds.label(idx[i]);
  return out;
}

Var branch_embedding(const ModelVars& vars, const WindowedDataset& ds, std::span<const std::size_t> idx,
                     const TrainConfig& cfg, std::size_t step, std::uint64_t branch) {
  Rng rng = Rng::derive(cfg.seed, {tag(Stream::kDropout), step, branch});
  return embed(vars, lstm_forward(vars, gather_steps(ds, idx), cfg.dropout, true, rng));
}

}  // namespace

StepRecord train_step(ModelParams& model, Optimizer& opt, const WindowedDataset& ds,
                      std::span<const std::size_t> anchors, const TrainConfig& cfg, std::size_t step) {
  if (anchors.empty()) throw ContractError("train_step: empty batch");
  Tape tape;
  const ModelVars vars = bind(tape, model);
  Var p_anchor = branch_embedding(vars, ds, anchors, cfg, step, 0);
  const auto labels = labels_of(ds, anchors);
  Var l_soft = softmax_cross_entropy(classify_logits(vars, p_anchor, model.sigmoid_logits), labels);

  StepRecord rec;
  rec.step = step;
  Var total = l_soft;
  Rng partners = Rng::derive(cfg.seed, {tag(Stream::kPartners), step});
  switch (cfg.method) {
    case Method::kQdm: {
      const QuadrupletBatch batch = complete_quadruplets(ds, anchors, partners);
      std::vector<std::size_t> pos, neg, minor;
      for (const auto& q : batch.tuples) {
        pos.push_back(q.positive);
        neg.push_back(q.negative);
        minor.push_back(q.minor);
      }
      Var p_pos = branch_embedding(vars, ds, pos, cfg, step, 1);
      Var p_neg = branch_embedding(vars, ds, neg, cfg, step, 2);
      Var p_minor = branch_embedding(vars, ds, minor, cfg, step, 3);
      const QuadrupletLoss q = quadruplet_loss(p_anchor, p_pos, p_neg, p_minor, batch.gamma, cfg.loss);
      total = combined_loss(l_soft, q.total, cfg.loss.beta);
      rec.pos = q.pos.value().item();
      rec.neg = q.neg.value().item();
      rec.minor = q.minor.value().item();
      rec.metric = q.total.value().item();
      break;
    }
    case Method::kSiamese:
    case Method::kTriplet: {
      const auto triplets = complete_triplets(ds, anchors, partners);
      std::vector<std::size_t> pos, neg;
      for (const auto& t : triplets) {
        pos.push_back(t.positive);
        neg.push_back(t.negative);
      }
      Var p_pos = branch_embedding(vars, ds, pos, cfg, step, 1);
      Var p_neg = branch_embedding(vars, ds, neg, cfg, step, 2);
      Var metric;
      if (cfg.method == Method::kSiamese) {
        // Mean over the 2B pairs (anchor, positive) and (anchor, negative).
        metric = scale(add(contrastive_loss(p_anchor, p_pos, true, cfg.siamese_margin),
                           contrastive_loss(p_anchor, p_neg, false, cfg.siamese_margin)),
                       0.5);
      } else {
        metric = triplet_loss(p_anchor, p_pos, p_neg, cfg.triplet_margin);
      }
      total = combined_loss(l_soft, metric, cfg.loss.beta);
      rec.metric = metric.value().item();
      break;
    }
    case Method::kPlain:
    case Method::kOversample:
      break;
  }
  rec.softmax = l_soft.value().item();
  rec.total = total.value().item();
  if (!std::isfinite(rec.total) || !std::isfinite(rec.metric)) {
    std::ostringstream os;
    os << "non-finite loss at step " << step << ": L_softmax=" << rec.softmax << " L_pos=" << rec.pos
       << " L_neg=" << rec.neg << " L_minor=" << rec.minor << " L_metric=" << rec.metric << " total=" << rec.total;
    throw NumericError(os.str());
  }
  const GradientMap grads = tape.backward(total);
  opt.update(model, grads);
  return rec;
}

WindowedDataset oversample(const WindowedDataset& ds, Rng& rng) {
  std::size_t target = 0;
  for (const auto& members : ds.class_index()) target = std::max(target, members.size());
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (int c : ds.imbalance_set()) {
    const auto& members = ds.class_index()[static_cast<std::size_t>(c)];
    for (std::size_t k = members.size(); k < target; ++k) idx.push_back(members[rng.index(members.size())]);
  }
  WindowedDataset out = ds.subset(idx);
  out.set_imbalance_set({});
  return out;
}

// ---- Trainer ----------------------------------------------------------------------

Trainer::Trainer(const WindowedDataset& train, TrainConfig cfg, const WindowedDataset* validation)
    : cfg_(std::move(cfg)), validation_(validation) {
  cfg_.validate();
  if (train.empty()) throw ContractError("cannot train on an empty dataset");
  if (train.class_count() > cfg_.class_count)
    throw ConfigError("dataset has " + std::to_string(train.class_count()) + " classes but class_count is " +
                      std::to_string(cfg_.class_count));
  data_ = train;
  if (cfg_.method == Method::kOversample && !data_.imbalance_set().empty()) {
    Rng rng = Rng::derive(cfg_.seed, {tag(Stream::kOversample)});
    data_ = oversample(data_, rng);
  }
  ModelShape shape{data_.feature_count(), cfg_.hidden_size, cfg_.layer_count, cfg_.embed_dim,
                   static_cast<std::size_t>(cfg_.class_count)};
  model_ = ModelParams::init(shape, cfg_.dropout, cfg_.seed);
  model_.sigmoid_logits = cfg_.sigmoid_logits;
  opt_ = Optimizer(cfg_.optimizer, cfg_.learning_rate, cfg_.adam, model_);
  steps_per_epoch_ = cfg_.steps_per_epoch ? cfg_.steps_per_epoch
                                          : (data_.size() + cfg_.batch_size - 1) / cfg_.batch_size;
}

Trainer Trainer::resume(const Checkpoint& ckpt, const WindowedDataset& train, TrainConfig cfg,
                        const WindowedDataset* validation) {
  if (ckpt.config_hash != cfg.hash())
    throw ConfigError("checkpoint was written for config " + ckpt.config_hash + ", not " + cfg.hash());
  Trainer t(train, std::move(cfg), validation);
  if (!(t.model_.shape() == ckpt.model.shape())) throw ContractError("checkpoint model shape differs from config");
  t.model_ = ckpt.model;
  t.opt_ = ckpt.optimizer;
  t.step_ = ckpt.step;
  t.epoch_ = ckpt.epoch;
  t.history_ = ckpt.history;
  t.best_model_ = ckpt.best_model;
  t.best_score_ = ckpt.best_score;
  t.epochs_since_best_ = ckpt.epochs_since_best;
  t.stopped_ = ckpt.stopped;
  return t;
}

bool Trainer::finished() const { return stopped_ || epoch_ >= cfg_.epochs; }

StepRecord Trainer::step() {
  if (finished()) throw ContractError("training already finished");
  Rng anchor_rng = Rng::derive(cfg_.seed, {tag(Stream::kAnchors), step_});
  const auto anchors = sample_anchors(data_, cfg_.batch_size, anchor_rng, cfg_.anchor_sampling);
  StepRecord rec = train_step(model_, opt_, data_, anchors, cfg_, step_);
  rec.epoch = epoch_;
  history_.push_back(rec);
  ++step_;
  if (step_ % steps_per_epoch_ == 0) end_epoch();
  return rec;
}

void Trainer::end_epoch() {
  ++epoch_;
  if (!validation_ || cfg_.patience == 0) return;
  const double score = evaluate(model_, *validation_).macro_f1;
  if (score > best_score_) {
    best_score_ = score;
    best_model_ = model_;
    epochs_since_best_ = 0;
  } else if (++epochs_since_best_ >= cfg_.patience) {
    stopped_ = true;
  }
}

bool Trainer::run_epoch() {
  const std::size_t start_epoch = epoch_;
  while (!finished() && epoch_ == start_epoch) step();
  return !finished();
}

void Trainer::run() {
  while (!finished()) step();
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.model = model_;
  c.optimizer = opt_;
  c.step = step_;
  c.epoch = epoch_;
  c.config_hash = cfg_.hash();
  c.history = history_;
  c.best_model = best_model_;
  c.best_score = best_score_;
  c.epochs_since_best = epochs_since_best_;
  c.stopped = stopped_;
  return c;
}

TrainResult Trainer::result() const {
  TrainResult r;
  r.model = best_model_ ? *best_model_ : model_;
  r.history = history_;
  r.epochs_run = epoch_;
  r.stopped_early = stopped_;
  if (best_model_) r.best_validation_f1 = best_score_;
  return r;
}

TrainResult train(const WindowedDataset& ds, const TrainConfig& cfg, const WindowedDataset* validation) {
  Trainer t(ds, cfg, validation);
  t.run();
  return t.result();
}

// ---- model / checkpoint files ---------------------------------------------------------

void put_model(Container& c, const std::string& prefix, const ModelParams& model) {
  const ModelShape s = model.shape();
  c.header[prefix] = {{"input_size", s.input_size},
                      {"hidden_size", s.hidden_size},
                      {"layer_count", s.layer_count},
                      {"embed_dim", s.embed_dim},
                      {"class_count", s.class_count},
                      {"dropout", model.dropout_rate},
                      {"sigmoid_logits", model.sigmoid_logits},
                      {"parameters", model.parameter_names()}};
  const auto names = model.parameter_names();
  const auto params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) c.put(prefix + "." + names[k], params[k]->buffer());
}

ModelParams get_model(const Container& c, const std::string& prefix) {
  const auto& h = c.header.at(prefix);
  ModelShape s{h.at("input_size").get<std::size_t>(), h.at("hidden_size").get<std::size_t>(),
               h.at("layer_count").get<std::size_t>(), h.at("embed_dim").get<std::size_t>(),
               h.at("class_count").get<std::size_t>()};
  ModelParams m = ModelParams::init(s, h.at("dropout").get<double>(), 0);
  m.sigmoid_logits = h.at("sigmoid_logits").get<bool>();
  const auto names = m.parameter_names();
  auto params = m.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& buf = c.f64(prefix + "." + names[k]);
    if (buf.size() != params[k]->size()) throw ParseError("parameter " + names[k] + " has the wrong size");
    *params[k] = Tensor(params[k]->shape(), buf);
  }
  m.validate();
  return m;
}

void save_model(const std::string& path, const ModelParams& model, const std::string& config_hash,
                const NormalizationStats* normalization) {
  Container c;
  c.header["config_hash"] = config_hash;
  put_model(c, "model", model);
  if (normalization) {
    c.header["normalization"] = {{"fitted_on", normalization->fitted_on}};
    c.put("normalization.mean", std::vector<double>(normalization->mean));
    c.put("normalization.stddev", std::vector<double>(normalization->stddev));
  }
  c.write(path, "QDMMODL1");
}

ModelParams load_model(const std::string& path, std::string* config_hash,
                       std::optional<NormalizationStats>* normalization) {
  const Container c = Container::read(path, "QDMMODL1");
  if (config_hash) *config_hash = c.header.value("config_hash", "");
  if (normalization) {
    normalization->reset();
    if (c.header.contains("normalization")) {
      NormalizationStats n;
      n.fitted_on = c.header.at("normalization").at("fitted_on").get<std::string>();
      n.mean = c.f64("normalization.mean");
      n.stddev = c.f64("normalization.stddev");
      *normalization = std::move(n);
    }
  }
  return get_model(c, "model");
}

void Checkpoint::save(const std::string& path) const {
  Container c;
  c.header["config_hash"] = config_hash;
  c.header["step"] = step;
  c.header["epoch"] = epoch;
  c.header["best_score"] = best_score;
  c.header["epochs_since_best"] = epochs_since_best;
  c.header["stopped"] = stopped;
  c.header["has_best_model"] = best_model.has_value();
  put_model(c, "model", model);
  if (best_model) put_model(c, "best_model", *best_model);
  optimizer.save(c, "optimizer");
  std::vector<double> hist;
  std::vector<std::int64_t> hist_idx;
  for (const auto& r : history) {
    hist_idx.push_back(static_cast<std::int64_t>(r.step));
    hist_idx.push_back(static_cast<std::int64_t>(r.epoch));
    for (double v : {r.softmax, r.pos, r.neg, r.minor, r.metric, r.total}) hist.push_back(v);
  }
  c.put("history.values", std::move(hist));
  c.put("history.index", std::move(hist_idx));
  c.write(path, "QDMCKPT1");
}

Checkpoint Checkpoint::load(const std::string& path) {
  const Container c = Container::read(path, "QDMCKPT1");
  Checkpoint k;
  k.config_hash = c.header.at("config_hash").get<std::string>();
  k.step = c.header.at("step").get<std::size_t>();
  k.epoch = c.header.at("epoch").get<std::size_t>();
  k.best_score = c.header.at("best_score").get<double>();
  k.epochs_since_best = c.header.at("epochs_since_best").get<std::size_t>();
  k.stopped = c.header.at("stopped").get<bool>();
  k.model = get_model(c, "model");
  if (c.header.at("has_best_model").get<bool>()) k.best_model = get_model(c, "best_model");
  k.optimizer.load(c, "optimizer", k.model);
  const auto& hv = c.f64("history.values");
  const auto& hi = c.i64("history.index");
  if (hv.size() != hi.size() * 3) throw ParseError("checkpoint history is corrupt");
  for (std::size_t r = 0; r < hi.size() / 2; ++r) {
    StepRecord s;
    s.step = static_cast<std::size_t>(hi[2 * r]);
    s.epoch = static_cast<std::size_t>(hi[2 * r + 1]);
    s.softmax = hv[6 * r];
    s.pos = hv[6 * r + 1];
    s.neg = hv[6 * r + 2];
    s.minor = hv[6 * r + 3];
    s.metric = hv[6 * r + 4];
    s.total = hv[6 * r + 5];
    k.history.push_back(s);
  }
  return k;
}

}  // namespace qdm
