#pragma once

// LSTM feature extractor, sigmoid embedding head and linear classifier.
//
// Gate equations per layer (no bias terms):
//   f_t = sigmoid(W_fh h_{t-1} + W_fx x_t)
//   r_t = sigmoid(W_rh h_{t-1} + W_rx x_t)
//   o_t = sigmoid(W_oh h_{t-1} + W_ox x_t)
//   g_t = tanh(W_ch h_{t-1} + W_cx x_t)
//   c_t = f_t * c_{t-1} + r_t * g_t
//   h_t = o_t * tanh(c_t)
// with h_0 = c_0 = 0. The feature of a sequence is the top layer's h_T; the
// embedding is p = sigmoid(W_fe h_T) and the logits are W_fc p.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qdm/autodiff.hpp"
#include "qdm/dataset.hpp"
#include "qdm/pairing.hpp"
#include "qdm/rng.hpp"

namespace qdm {

struct LstmLayerParams {
  // Recurrent weights are [H x H], input weights [H x in].
  Tensor w_fh, w_fx, w_rh, w_rx, w_oh, w_ox, w_ch, w_cx;

  std::array<Tensor*, 8> all() { return {&w_fh, &w_fx, &w_rh, &w_rx, &w_oh, &w_ox, &w_ch, &w_cx}; }
  std::array<const Tensor*, 8> all() const { return {&w_fh, &w_fx, &w_rh, &w_rx, &w_oh, &w_ox, &w_ch, &w_cx}; }
};

struct LstmParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  std::vector<LstmLayerParams> layers;

  std::size_t layer_count() const noexcept { return layers.size(); }
  void validate() const;
};

struct EmbeddingParams {
  Tensor w_fe;  // [E x H]
  std::size_t embed_dim() const { return w_fe.rows(); }
};

struct ClassifierParams {
  Tensor w_fc;  // [C x E]
  std::size_t class_count() const { return w_fc.rows(); }
};

struct ModelShape {
  std::size_t input_size = 1;
  std::size_t hidden_size = 100;
  std::size_t layer_count = 3;
  std::size_t embed_dim = 64;
  std::size_t class_count = 7;
  bool operator==(const ModelShape&) const = default;
};

struct ModelParams {
  LstmParams lstm;
  EmbeddingParams embed;
  ClassifierParams classifier;
  double dropout_rate = 0.0;
  // Apply sigmoid to the classifier output before the softmax; off by default.
  bool sigmoid_logits = false;

  // Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static ModelParams init(const ModelShape& shape, double dropout_rate, std::uint64_t seed);

  ModelShape shape() const;
  void validate() const;
  // Stable order: layer-major gate weights, then W_fe, then W_fc.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
  bool bitwise_equal(const ModelParams& other) const;
};

// Parameters registered on one tape. Every branch of a tuple is evaluated
// against the same ModelVars, so gradients accumulate into one set.
struct ModelVars {
  std::vector<std::array<Var, 8>> layers;
  Var w_fe;
  Var w_fc;
};

ModelVars bind(Tape& tape, const ModelParams& model);

// Inverted dropout mask: entries are 0 with probability rate, else 1/(1-rate).
Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);

// Batched LSTM over T steps of [B x in] inputs; returns top-layer h_T [B x H].
// Dropout is applied to hidden states passed between stacked layers only.
Var lstm_forward(const ModelVars& vars, const std::vector<Tensor>& steps, double dropout_rate, bool training,
                 Rng& rng);
Var embed(const ModelVars& vars, Var feature);
Var classify_logits(const ModelVars& vars, Var embedding, bool sigmoid_logits = false);

// Time-major gather of windows: T tensors of shape [B x m].
std::vector<Tensor> gather_steps(const WindowedDataset& ds, std::span<const std::size_t> indices);

// Value-level single-sequence forms.
Tensor lstm_forward(const LstmParams& params, const Tensor& sequence, double dropout_rate, bool training, Rng& rng);
Tensor embed(const EmbeddingParams& params, const Tensor& feature);
Tensor classify_logits(const ClassifierParams& params, const Tensor& embedding, bool sigmoid_logits = false);

struct QuadrupletEmbeddings {
  Tensor anchor, positive, negative, minor;
  Tensor anchor_logits;
};

// Evaluates the four sequences with the one shared parameter set (no dropout).
QuadrupletEmbeddings forward_quadruplet(const ModelParams& model, const Tensor& anchor, const Tensor& positive,
                                        const Tensor& negative, const Tensor& minor);

// Logits [N x C] for every sample, evaluated in eval mode in chunks.
Tensor predict_logits(const ModelParams& model, const WindowedDataset& ds, std::size_t chunk = 256);
std::vector<int> predict(const ModelParams& model, const WindowedDataset& ds);

}  // namespace qdm
