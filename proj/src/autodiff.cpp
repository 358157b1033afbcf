#include "qdm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "qdm/error.hpp"

namespace qdm {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t product(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void check_shape(const Shape& shape) {
  if (shape.size() > 2) throw DimensionError("tensors of rank > 2 are not supported: " + shape_to_string(shape));
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_to_string(shape));
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  values_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_shape(shape_);
  if (product(shape_) != values_.size())
    throw DimensionError("shape " + shape_to_string(shape_) + " does not match " +
                         std::to_string(values_.size()) + " values");
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(v));
}

std::size_t Tensor::rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) return 1;
  return shape_.back();
}

double Tensor::item() const {
  if (values_.size() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape_));
  return values_[0];
}

bool Tensor::bitwise_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ &&
         (values_.empty() ||
          std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

// ---- Var / GradientMap -----------------------------------------------------

const Tensor& Var::value() const { return tape->value(*this); }

const Tensor& GradientMap::operator[](const Tensor& parameter) const {
  auto it = grads_.find(&parameter);
  if (it == grads_.end()) throw ContractError("tensor is not a registered parameter of this tape");
  return it->second;
}

// ---- Tape ------------------------------------------------------------------

Var Tape::parameter(const Tensor& p) {
  Node n;
  n.value = p;
  n.requires_grad = true;
  n.parameter = &p;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.requires_grad = value.requires_grad();
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (auto i : inputs)
    if (nodes_[i].requires_grad) n.requires_grad = true;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.grad.empty() ? Tensor(n.value.shape(), 0.0) : n.grad;
}

GradientMap Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to a different tape");
  if (differentiated_) throw ContractError("backward: tape has already been differentiated");
  const Tensor& lv = nodes_[loss.id].value;
  if (lv.size() != 1) throw ContractError("backward: loss must be scalar, got " + shape_to_string(lv.shape()));
  differentiated_ = true;

  accumulator(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }

  GradientMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (!n.parameter) continue;
    Tensor g = n.grad.empty() ? Tensor(n.value.shape(), 0.0) : n.grad;
    auto [it, inserted] = out.grads_.try_emplace(n.parameter, std::move(g));
    if (!inserted) {
      const Tensor& extra = n.grad.empty() ? Tensor(n.value.shape(), 0.0) : n.grad;
      for (std::size_t k = 0; k < extra.size(); ++k) it->second[k] += extra[k];
    }
  }
  return out;
}

// ---- ops -------------------------------------------------------------------

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError("operands recorded on different tapes");
  return *a.tape;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
}

template <class F, class D>
Var unary(Var x, F forward_fn, D derivative) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = forward_fn(xv[i]);
  return t.record(std::move(y), {x.id}, [derivative](Tape& tp, std::size_t self) {
    const std::size_t in = tp.inputs(self)[0];
    if (!tp.needs_grad(in)) return;
    const Tensor& g = tp.grad_of(self);
    const Tensor& xv = tp.value_of(in);
    const Tensor& yv = tp.value_of(self);
    Tensor& acc = tp.accumulator(in);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * derivative(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k)
    throw DimensionError("matmul: inner dimensions differ " + shape_to_string(av.shape()) + " . " +
                         shape_to_string(bv.shape()));
  Tensor c(Shape{m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv.buffer()[p * n];
      double* crow = &c.buffer()[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  return t.record(std::move(c), {a.id, b.id}, [m, k, n](Tape& tp, std::size_t self) {
    const std::size_t ia = tp.inputs(self)[0], ib = tp.inputs(self)[1];
    const Tensor& g = tp.grad_of(self);
    if (tp.needs_grad(ia)) {
      const Tensor& bv = tp.value_of(ib);
      Tensor& da = tp.accumulator(ia);  // dA = dC . B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          da[i * k + p] += s;
        }
    }
    if (tp.needs_grad(ib)) {
      const Tensor& av = tp.value_of(ia);
      Tensor& db = tp.accumulator(ib);  // dB = A^T . dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var linear(Var x, Var weight) {
  Tape& t = tape_of(x, weight);
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(weight);
  if (wv.rank() != 2) throw DimensionError("linear: weight must be a matrix, got " + shape_to_string(wv.shape()));
  const std::size_t batch = xv.rows(), in = xv.cols(), out = wv.rows();
  if (wv.cols() != in)
    throw DimensionError("linear: input " + shape_to_string(xv.shape()) + " incompatible with weight " +
                         shape_to_string(wv.shape()));
  Shape out_shape = xv.rank() == 2 ? Shape{batch, out} : Shape{out};
  Tensor y(out_shape, 0.0);
  const double* X = xv.buffer().data();
  const double* W = wv.buffer().data();
  double* Y = y.buffer().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out; ++o) {
      double s = 0.0;
      const double* xr = X + b * in;
      const double* wr = W + o * in;
      for (std::size_t i = 0; i < in; ++i) s += xr[i] * wr[i];
      Y[b * out + o] = s;
    }
  return t.record(std::move(y), {x.id, weight.id}, [batch, in, out](Tape& tp, std::size_t self) {
    const std::size_t ix = tp.inputs(self)[0], iw = tp.inputs(self)[1];
    const double* G = tp.grad_of(self).buffer().data();
    if (tp.needs_grad(ix)) {
      const double* W = tp.value_of(iw).buffer().data();
      double* DX = tp.accumulator(ix).buffer().data();  // dX = dY . W
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out; ++o) {
          const double g = G[b * out + o];
          const double* wr = W + o * in;
          double* dxr = DX + b * in;
          for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
        }
    }
    if (tp.needs_grad(iw)) {
      const double* X = tp.value_of(ix).buffer().data();
      double* DW = tp.accumulator(iw).buffer().data();  // dW = dY^T . X
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out; ++o) {
          const double g = G[b * out + o];
          const double* xr = X + b * in;
          double* dwr = DW + o * in;
          for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
        }
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape("add", av, bv);
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return t.record(std::move(y), {a.id, b.id}, [](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t in = tp.inputs(self)[k];
      if (!tp.needs_grad(in)) continue;
      Tensor& acc = tp.accumulator(in);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape("sub", av, bv);
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return t.record(std::move(y), {a.id, b.id}, [](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    const std::size_t ia = tp.inputs(self)[0], ib = tp.inputs(self)[1];
    if (tp.needs_grad(ia)) {
      Tensor& acc = tp.accumulator(ia);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
    if (tp.needs_grad(ib)) {
      Tensor& acc = tp.accumulator(ib);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape("mul", av, bv);
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return t.record(std::move(y), {a.id, b.id}, [](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    const std::size_t ia = tp.inputs(self)[0], ib = tp.inputs(self)[1];
    if (tp.needs_grad(ia)) {
      const Tensor& bv = tp.value_of(ib);
      Tensor& acc = tp.accumulator(ia);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * bv[i];
    }
    if (tp.needs_grad(ib)) {
      const Tensor& av = tp.value_of(ia);
      Tensor& acc = tp.accumulator(ib);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Tensor y = t.value(a);
  for (auto& v : y.buffer()) v *= s;
  return t.record(std::move(y), {a.id}, [s](Tape& tp, std::size_t self) {
    const std::size_t in = tp.inputs(self)[0];
    const Tensor& g = tp.grad_of(self);
    Tensor& acc = tp.accumulator(in);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * s;
  });
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape;
  Tensor y = t.value(a);
  for (auto& v : y.buffer()) v += s;
  return t.record(std::move(y), {a.id}, [](Tape& tp, std::size_t self) {
    const std::size_t in = tp.inputs(self)[0];
    const Tensor& g = tp.grad_of(self);
    Tensor& acc = tp.accumulator(in);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  });
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(Var x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sum(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  double s = 0.0;
  for (double v : xv.values()) s += v;
  return t.record(Tensor::scalar(s), {x.id}, [](Tape& tp, std::size_t self) {
    const std::size_t in = tp.inputs(self)[0];
    const double g = tp.grad_of(self)[0];
    for (auto& v : tp.accumulator(in).buffer()) v += g;
  });
}

Var mean(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  double s = 0.0;
  for (double v : xv.values()) s += v;
  const double n = static_cast<double>(xv.size());
  return t.record(Tensor::scalar(s / n), {x.id}, [n](Tape& tp, std::size_t self) {
    const std::size_t in = tp.inputs(self)[0];
    const double g = tp.grad_of(self)[0] / n;
    for (auto& v : tp.accumulator(in).buffer()) v += g;
  });
}

namespace {

// Shared body of the two distance ops. squared selects ||a-b||^2.
Var distance_op(Var a, Var b, bool squared) {
  Tape& t = tape_of(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(squared ? "squared_distance" : "euclidean_distance", av, bv);
  const std::size_t rows = av.rows(), d = av.cols();
  Tensor y = av.rank() == 2 ? Tensor(Shape{rows}, 0.0) : Tensor::scalar(0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = av[r * d + i] - bv[r * d + i];
      s += diff * diff;
    }
    y[r] = squared ? s : std::sqrt(s);
  }
  return t.record(std::move(y), {a.id, b.id}, [rows, d, squared](Tape& tp, std::size_t self) {
    const std::size_t ia = tp.inputs(self)[0], ib = tp.inputs(self)[1];
    const Tensor& g = tp.grad_of(self);
    const Tensor& dist = tp.value_of(self);
    const Tensor& av = tp.value_of(ia);
    const Tensor& bv = tp.value_of(ib);
    Tensor* da = tp.needs_grad(ia) ? &tp.accumulator(ia) : nullptr;
    Tensor* db = tp.needs_grad(ib) ? &tp.accumulator(ib) : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      double coef;
      if (squared) {
        coef = 2.0 * g[r];
      } else {
        if (dist[r] == 0.0) continue;  // subgradient zero at coincident points
        coef = g[r] / dist[r];
      }
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = av[r * d + i] - bv[r * d + i];
        if (da) (*da)[r * d + i] += coef * diff;
        if (db) (*db)[r * d + i] -= coef * diff;
      }
    }
  });
}

}  // namespace

Var euclidean_distance(Var a, Var b) { return distance_op(a, b, false); }
Var squared_distance(Var a, Var b) { return distance_op(a, b, true); }

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    z += v;
  }
  for (auto& v : p) v /= z;
  return p;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = *logits.tape;
  const Tensor& lv = t.value(logits);
  const std::size_t rows = lv.rows(), classes = lv.cols();
  if (labels.size() != rows)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_to_string(lv.shape()));
  Tensor probs(Shape{rows, classes});
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ContractError("softmax_cross_entropy: class " + std::to_string(y) + " out of range for " +
                          std::to_string(classes) + " classes");
    const double* row = &lv.buffer()[r * classes];
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const double log_z = std::log(z);
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(row[c] - mx - log_z);
    total += -(row[y] - mx - log_z);
  }
  const double n = static_cast<double>(rows);
  std::vector<int> targets(labels.begin(), labels.end());
  return t.record(Tensor::scalar(total / n), {logits.id},
                  [probs = std::move(probs), targets = std::move(targets), rows, classes, n](Tape& tp,
                                                                                           std::size_t self) {
                    const std::size_t in = tp.inputs(self)[0];
                    const double g = tp.grad_of(self)[0] / n;
                    Tensor& acc = tp.accumulator(in);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < classes; ++c) {
                        const double onehot = static_cast<int>(c) == targets[r] ? 1.0 : 0.0;
                        acc[r * classes + c] += g * (probs[r * classes + c] - onehot);
                      }
                  });
}

Var softmax_cross_entropy(Var logits, int label) {
  const int labels[1] = {label};
  return softmax_cross_entropy(logits, std::span<const int>(labels, 1));
}

}  // namespace qdm
