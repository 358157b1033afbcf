#include "qdm/network.hpp"

#include <cmath>

#include "qdm/error.hpp"

namespace qdm {

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(Shape{rows, cols});
  for (auto& v : t.buffer()) v = rng.uniform(-bound, bound);
  return t;
}

void expect_shape(const Tensor& t, std::size_t r, std::size_t c, const std::string& name) {
  if (t.rank() != 2 || t.rows() != r || t.cols() != c)
    throw DimensionError(name + " has shape " + shape_to_string(t.shape()) + ", expected [" + std::to_string(r) +
                         " x " + std::to_string(c) + "]");
}

const char* kGateNames[8] = {"w_fh", "w_fx", "w_rh", "w_rx", "w_oh", "w_ox", "w_ch", "w_cx"};

}  // namespace

void LstmParams::validate() const {
  if (layers.empty()) throw ContractError("LSTM needs at least one layer");
  if (hidden_size == 0 || input_size == 0) throw ContractError("LSTM sizes must be positive");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::size_t in = l == 0 ? input_size : hidden_size;
    const auto w = layers[l].all();
    for (std::size_t g = 0; g < 8; ++g) {
      const bool recurrent = g % 2 == 0;
      const std::string name = "layer " + std::to_string(l) + " " + kGateNames[g];
      expect_shape(*w[g], hidden_size, recurrent ? hidden_size : in, name);
      if (!w[g]->all_finite()) throw NumericError(name + " contains non-finite values");
    }
  }
}

ModelParams ModelParams::init(const ModelShape& s, double dropout_rate, std::uint64_t seed) {
  if (s.input_size == 0 || s.hidden_size == 0 || s.layer_count == 0 || s.embed_dim == 0)
    throw ConfigError("model dimensions must be positive");
  if (s.class_count < 2) throw ConfigError("class_count must be at least 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  Rng rng = Rng::derive(seed, {tag(Stream::kInit)});
  ModelParams m;
  m.dropout_rate = dropout_rate;
  m.lstm.input_size = s.input_size;
  m.lstm.hidden_size = s.hidden_size;
  const std::size_t h = s.hidden_size;
  for (std::size_t l = 0; l < s.layer_count; ++l) {
    const std::size_t in = l == 0 ? s.input_size : h;
    LstmLayerParams p;
    auto w = p.all();
    for (std::size_t g = 0; g < 8; ++g) {
      const bool recurrent = g % 2 == 0;
      *w[g] = uniform_matrix(h, recurrent ? h : in, recurrent ? h : in, rng);
    }
    m.lstm.layers.push_back(std::move(p));
  }
  m.embed.w_fe = uniform_matrix(s.embed_dim, h, h, rng);
  m.classifier.w_fc = uniform_matrix(s.class_count, s.embed_dim, s.embed_dim, rng);
  return m;
}

ModelShape ModelParams::shape() const {
  return ModelShape{lstm.input_size, lstm.hidden_size, lstm.layer_count(), embed.embed_dim(),
                    classifier.class_count()};
}

void ModelParams::validate() const {
  lstm.validate();
  expect_shape(embed.w_fe, embed.w_fe.rows(), lstm.hidden_size, "w_fe");
  expect_shape(classifier.w_fc, classifier.w_fc.rows(), embed.embed_dim(), "w_fc");
  if (classifier.class_count() < 2) throw ContractError("classifier needs at least two classes");
  if (!embed.w_fe.all_finite()) throw NumericError("w_fe contains non-finite values");
  if (!classifier.w_fc.all_finite()) throw NumericError("w_fc contains non-finite values");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ContractError("dropout must lie in [0, 1)");
}

std::vector<Tensor*> ModelParams::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : lstm.layers)
    for (auto* t : l.all()) out.push_back(t);
  out.push_back(&embed.w_fe);
  out.push_back(&classifier.w_fc);
  return out;
}

std::vector<const Tensor*> ModelParams::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : lstm.layers)
    for (const auto* t : l.all()) out.push_back(t);
  out.push_back(&embed.w_fe);
  out.push_back(&classifier.w_fc);
  return out;
}

std::vector<std::string> ModelParams::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < lstm.layers.size(); ++l)
    for (const char* g : kGateNames) out.push_back("lstm." + std::to_string(l) + "." + g);
  out.push_back("embed.w_fe");
  out.push_back("classifier.w_fc");
  return out;
}

bool ModelParams::bitwise_equal(const ModelParams& other) const {
  const auto a = parameters();
  const auto b = other.parameters();
  if (a.size() != b.size() || dropout_rate != other.dropout_rate || sigmoid_logits != other.sigmoid_logits)
    return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a[i]->bitwise_equal(*b[i])) return false;
  return true;
}

ModelVars bind(Tape& tape, const ModelParams& model) {
  ModelVars v;
  for (const auto& layer : model.lstm.layers) {
    std::array<Var, 8> w;
    const auto p = layer.all();
    for (std::size_t g = 0; g < 8; ++g) w[g] = tape.parameter(*p[g]);
    v.layers.push_back(w);
  }
  v.w_fe = tape.parameter(model.embed.w_fe);
  v.w_fc = tape.parameter(model.classifier.w_fc);
  return v;
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout rate must lie in [0, 1)");
  Tensor m(Shape{rows, cols}, 1.0);
  if (rate == 0.0) return m;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& v : m.buffer()) v = rng.bernoulli(rate) ? 0.0 : keep_scale;
  return m;
}

Var lstm_forward(const ModelVars& vars, const std::vector<Tensor>& steps, double dropout_rate, bool training,
                 Rng& rng) {
  if (steps.empty()) throw ContractError("lstm_forward: empty sequence");
  if (vars.layers.empty()) throw ContractError("lstm_forward: model has no layers");
  Tape& tape = *vars.w_fe.tape;
  const std::size_t batch = steps.front().rows();
  const std::size_t hidden = tape.value(vars.layers.front()[0]).rows();
  const std::size_t in0 = tape.value(vars.layers.front()[1]).cols();

  std::vector<Var> inputs;
  inputs.reserve(steps.size());
  for (const auto& s : steps) {
    if (s.rows() != batch || s.cols() != in0)
      throw DimensionError("lstm_forward: step of shape " + shape_to_string(s.shape()) + ", expected [" +
                           std::to_string(batch) + " x " + std::to_string(in0) + "]");
    Tensor x = s;
    if (x.rank() != 2) x = Tensor(Shape{batch, in0}, x.buffer());
    inputs.push_back(tape.constant(std::move(x)));
  }

  const Tensor zeros(Shape{batch, hidden}, 0.0);
  for (std::size_t l = 0; l < vars.layers.size(); ++l) {
    const auto& w = vars.layers[l];
    Var h = tape.constant(zeros);
    Var c = tape.constant(zeros);
    std::vector<Var> outputs;
    outputs.reserve(inputs.size());
    for (Var x : inputs) {
      Var f = sigmoid(add(linear(h, w[0]), linear(x, w[1])));
      Var r = sigmoid(add(linear(h, w[2]), linear(x, w[3])));
      Var o = sigmoid(add(linear(h, w[4]), linear(x, w[5])));
      Var g = tanh(add(linear(h, w[6]), linear(x, w[7])));
      c = add(mul(f, c), mul(r, g));
      h = mul(o, tanh(c));
      outputs.push_back(h);
    }
    const bool last = l + 1 == vars.layers.size();
    if (last) return outputs.back();
    if (training && dropout_rate > 0.0)
      for (auto& out : outputs) out = mul(out, tape.constant(dropout_mask(batch, hidden, dropout_rate, rng)));
    inputs = std::move(outputs);
  }
  return inputs.back();  // unreachable
}

Var embed(const ModelVars& vars, Var feature) { return sigmoid(linear(feature, vars.w_fe)); }

Var classify_logits(const ModelVars& vars, Var embedding, bool sigmoid_logits) {
  Var a = linear(embedding, vars.w_fc);
  return sigmoid_logits ? sigmoid(a) : a;
}

std::vector<Tensor> gather_steps(const WindowedDataset& ds, std::span<const std::size_t> indices) {
  const std::size_t T = ds.window_length(), m = ds.feature_count(), B = indices.size();
  std::vector<Tensor> steps;
  steps.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    Tensor x(Shape{B, m});
    for (std::size_t b = 0; b < B; ++b) {
      const WindowRef& w = ds.window(indices[b]);
      const SeriesMatrix& run = *ds.runs()[w.run];
      const double* src = &run.values[(w.start + t) * m];
      std::copy(src, src + m, &x.buffer()[b * m]);
    }
    steps.push_back(std::move(x));
  }
  return steps;
}

namespace {

std::vector<Tensor> sequence_steps(const Tensor& sequence, std::size_t input_size) {
  if (sequence.empty()) throw ContractError("lstm_forward: empty sequence");
  const std::size_t T = sequence.rank() == 2 ? sequence.rows() : sequence.size() / input_size;
  if (sequence.cols() != input_size && sequence.rank() == 2)
    throw DimensionError("sequence has " + std::to_string(sequence.cols()) + " features, model expects " +
                         std::to_string(input_size));
  std::vector<Tensor> steps;
  for (std::size_t t = 0; t < T; ++t)
    steps.emplace_back(Shape{1, input_size},
                       std::vector<double>(sequence.buffer().begin() + static_cast<std::ptrdiff_t>(t * input_size),
                                           sequence.buffer().begin() + static_cast<std::ptrdiff_t>((t + 1) * input_size)));
  return steps;
}

ModelParams wrap_lstm(const LstmParams& p) {
  ModelParams m;
  m.lstm = p;
  m.embed.w_fe = Tensor(Shape{1, p.hidden_size}, 0.0);
  m.classifier.w_fc = Tensor(Shape{2, 1}, 0.0);
  return m;
}

Tensor as_vector(const Tensor& t) { return Tensor(Shape{t.size()}, t.buffer()); }

}  // namespace

Tensor lstm_forward(const LstmParams& params, const Tensor& sequence, double dropout_rate, bool training, Rng& rng) {
  params.validate();
  const ModelParams m = wrap_lstm(params);
  Tape tape;
  const ModelVars v = bind(tape, m);
  return as_vector(tape.value(lstm_forward(v, sequence_steps(sequence, params.input_size), dropout_rate, training, rng)));
}

Tensor embed(const EmbeddingParams& params, const Tensor& feature) {
  if (feature.size() != params.w_fe.cols())
    throw DimensionError("embed: feature of length " + std::to_string(feature.size()) + ", weight " +
                         shape_to_string(params.w_fe.shape()));
  Tape tape;
  Var w = tape.constant(params.w_fe);
  return as_vector(tape.value(sigmoid(linear(tape.constant(as_vector(feature)), w))));
}

Tensor classify_logits(const ClassifierParams& params, const Tensor& embedding, bool sigmoid_logits) {
  if (embedding.size() != params.w_fc.cols())
    throw DimensionError("classify_logits: embedding of length " + std::to_string(embedding.size()) + ", weight " +
                         shape_to_string(params.w_fc.shape()));
  Tape tape;
  Var a = linear(tape.constant(as_vector(embedding)), tape.constant(params.w_fc));
  if (sigmoid_logits) a = sigmoid(a);
  return tape.value(a);
}

QuadrupletEmbeddings forward_quadruplet(const ModelParams& model, const Tensor& anchor, const Tensor& positive,
                                        const Tensor& negative, const Tensor& minor) {
  if (!anchor.same_shape(positive) || !anchor.same_shape(negative) || !anchor.same_shape(minor))
    throw DimensionError("forward_quadruplet: the four sequences must have identical shapes");
  Tape tape;
  const ModelVars v = bind(tape, model);
  Rng unused(0);
  auto branch = [&](const Tensor& seq) {
    return embed(v, lstm_forward(v, sequence_steps(seq, model.lstm.input_size), 0.0, false, unused));
  };
  QuadrupletEmbeddings out;
  Var pa = branch(anchor);
  out.anchor = as_vector(tape.value(pa));
  out.positive = as_vector(tape.value(branch(positive)));
  out.negative = as_vector(tape.value(branch(negative)));
  out.minor = as_vector(tape.value(branch(minor)));
  out.anchor_logits = as_vector(tape.value(classify_logits(v, pa, model.sigmoid_logits)));
  return out;
}

Tensor predict_logits(const ModelParams& model, const WindowedDataset& ds, std::size_t chunk) {
  if (ds.empty()) throw ContractError("predict: empty dataset");
  if (ds.feature_count() != model.lstm.input_size)
    throw DimensionError("dataset has " + std::to_string(ds.feature_count()) + " features, model expects " +
                         std::to_string(model.lstm.input_size));
  const std::size_t C = model.classifier.class_count();
  Tensor out(Shape{ds.size(), C});
  Rng unused(0);
  for (std::size_t begin = 0; begin < ds.size(); begin += chunk) {
    const std::size_t end = std::min(ds.size(), begin + chunk);
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    Tape tape;
    const ModelVars v = bind(tape, model);
    Var logits = classify_logits(v, embed(v, lstm_forward(v, gather_steps(ds, idx), 0.0, false, unused)),
                                 model.sigmoid_logits);
    const Tensor& lv = tape.value(logits);
    std::copy(lv.buffer().begin(), lv.buffer().end(), out.buffer().begin() + static_cast<std::ptrdiff_t>(begin * C));
  }
  return out;
}

std::vector<int> predict(const ModelParams& model, const WindowedDataset& ds) {
  const Tensor logits = predict_logits(model, ds);
  const std::size_t C = logits.cols();
  std::vector<int> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    out[i] = static_cast<int>(argmax(std::span<const double>(&logits.buffer()[i * C], C)));
  return out;
}

}  // namespace qdm
