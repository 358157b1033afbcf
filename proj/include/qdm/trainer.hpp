#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdm/container.hpp"
#include "qdm/dataset.hpp"
#include "qdm/losses.hpp"
#include "qdm/network.hpp"
#include "qdm/pairing.hpp"

namespace qdm {

enum class Method { kQdm, kPlain, kSiamese, kTriplet, kOversample };
enum class OptimizerKind { kSgd, kAdam };

std::string to_string(Method m);
Method parse_method(const std::string& name);
std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& name);

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  Method method = Method::kQdm;
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  // Optimizer updates per epoch; 0 means ceil(train size / batch size).
  std::size_t steps_per_epoch = 0;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  AdamSettings adam;
  std::uint64_t seed = 0;

  // Quadruplet margins/weights; loss.beta also weights the siamese and
  // triplet pair terms.
  QuadrupletLossConfig loss;
  // Ablation presets may set M2 == M or lambda == 1.
  bool relaxed_loss_constraints = false;
  double siamese_margin = 20.0;
  double triplet_margin = 1.0;

  double dropout = 0.5;
  std::size_t hidden_size = 100;
  std::size_t layer_count = 3;
  std::size_t embed_dim = 64;
  int class_count = 7;
  bool sigmoid_logits = false;
  AnchorSampling anchor_sampling = AnchorSampling::kUniformOverSamples;

  // Early stopping on validation macro-F1, checked once per epoch. Only
  // active when a validation set is supplied; 0 disables.
  std::size_t patience = 10;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  std::string hash() const;
};

// Defaults matching the TE (case 1) and CWRU (case 2) hyper-parameter tables.
TrainConfig te_train_config();
TrainConfig cwru_train_config();

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double softmax = 0.0;
  double pos = 0.0;    // quadruplet breakdown (QDM only)
  double neg = 0.0;
  double minor = 0.0;
  double metric = 0.0;  // quadruplet / contrastive / triplet term before beta
  double total = 0.0;

  nlohmann::json to_json() const;
  bool operator==(const StepRecord&) const = default;
};

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, double learning_rate, AdamSettings adam, const ModelParams& model);

  // One update of every parameter from its gradient.
  void update(ModelParams& model, const GradientMap& grads);

  OptimizerKind kind() const noexcept { return kind_; }
  std::uint64_t steps() const noexcept { return t_; }
  const std::vector<Tensor>& first_moment() const noexcept { return m_; }
  const std::vector<Tensor>& second_moment() const noexcept { return v_; }

  void save(Container& c, const std::string& prefix) const;
  void load(const Container& c, const std::string& prefix, const ModelParams& model);

 private:
  OptimizerKind kind_ = OptimizerKind::kAdam;
  double lr_ = 1e-3;
  AdamSettings adam_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// One optimizer update on the given anchors. Pairs, dropout masks and the
// anchors' partners are drawn from streams derived from (cfg.seed, step).
StepRecord train_step(ModelParams& model, Optimizer& opt, const WindowedDataset& ds,
                      std::span<const std::size_t> anchors, const TrainConfig& cfg, std::size_t step);

// Duplicates (with replacement) samples of each imbalanced class until it
// matches the largest class; the imbalance set is cleared.
WindowedDataset oversample(const WindowedDataset& ds, Rng& rng);

struct TrainResult {
  ModelParams model;
  std::vector<StepRecord> history;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  std::optional<double> best_validation_f1;
};

struct Checkpoint {
  ModelParams model;
  Optimizer optimizer;
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::string config_hash;
  std::vector<StepRecord> history;
  // Early-stopping state.
  std::optional<ModelParams> best_model;
  double best_score = -1.0;
  std::size_t epochs_since_best = 0;
  bool stopped = false;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

class Trainer {
 public:
  Trainer(const WindowedDataset& train, TrainConfig cfg, const WindowedDataset* validation = nullptr);
  static Trainer resume(const Checkpoint& ckpt, const WindowedDataset& train, TrainConfig cfg,
                        const WindowedDataset* validation = nullptr);

  StepRecord step();
  // Runs the remaining steps of the current epoch plus early-stopping
  // bookkeeping. Returns false once training is finished.
  bool run_epoch();
  void run();
  bool finished() const;

  std::size_t steps_per_epoch() const noexcept { return steps_per_epoch_; }
  std::size_t current_step() const noexcept { return step_; }
  std::size_t current_epoch() const noexcept { return epoch_; }
  const ModelParams& model() const noexcept { return model_; }
  const std::vector<StepRecord>& history() const noexcept { return history_; }
  const WindowedDataset& training_data() const noexcept { return data_; }
  const TrainConfig& config() const noexcept { return cfg_; }

  Checkpoint checkpoint() const;
  TrainResult result() const;

 private:
  void end_epoch();

  TrainConfig cfg_;
  WindowedDataset data_;
  const WindowedDataset* validation_ = nullptr;
  ModelParams model_;
  Optimizer opt_;
  std::size_t steps_per_epoch_ = 1;
  std::size_t step_ = 0;
  std::size_t epoch_ = 0;
  std::vector<StepRecord> history_;
  std::optional<ModelParams> best_model_;
  double best_score_ = -1.0;
  std::size_t epochs_since_best_ = 0;
  bool stopped_ = false;
};

TrainResult train(const WindowedDataset& ds, const TrainConfig& cfg, const WindowedDataset* validation = nullptr);

// Model file: container with the parameter buffers, shapes and config hash.
void put_model(Container& c, const std::string& prefix, const ModelParams& model);
ModelParams get_model(const Container& c, const std::string& prefix);
// Normalization stats, when given, are stored so evaluation can standardize
// new data exactly as the training split was.
void save_model(const std::string& path, const ModelParams& model, const std::string& config_hash = "",
                const NormalizationStats* normalization = nullptr);
ModelParams load_model(const std::string& path, std::string* config_hash = nullptr,
                       std::optional<NormalizationStats>* normalization = nullptr);

}  // namespace qdm
