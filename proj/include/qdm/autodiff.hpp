#pragma once

// Dense double-precision tensors with a reverse-mode tape.
//
// Only rank-0, rank-1 and rank-2 tensors are used by the model. A rank-1
// tensor of length d behaves as a 1 x d row wherever a matrix is expected,
// so batched code paths ([B x d]) and single-sample paths ([d]) share ops.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace qdm {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  // Matrix view: rank-0 -> 1x1, rank-1 [d] -> 1 x d, rank-2 [r x c] -> r x c.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::vector<double>& buffer() noexcept { return values_; }
  const std::vector<double>& buffer() const noexcept { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double item() const;

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  bool bitwise_equal(const Tensor& other) const noexcept;
  bool all_finite() const noexcept;

 private:
  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
};

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Gradients of a scalar loss with respect to every registered parameter.
class GradientMap {
 public:
  const Tensor& operator[](const Tensor& parameter) const;
  bool contains(const Tensor& parameter) const { return grads_.count(&parameter) != 0; }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<const Tensor*, Tensor> grads_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable leaf bound to an external tensor; its gradient is reported by
  // backward() keyed on that tensor's address.
  Var parameter(const Tensor& p);
  // Non-differentiable leaf.
  Var constant(Tensor value);
  // Leaf whose gradient is tracked when value.requires_grad() is set.
  Var leaf(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  // Gradient of the last backward() target with respect to v (zeros when v
  // is unreachable or not differentiable).
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Reverse sweep from a scalar. A tape can be differentiated once; a second
  // call throws ContractError.
  GradientMap backward(Var loss);
  bool differentiated() const noexcept { return differentiated_; }

  // Used by op implementations.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient accumulator for node id; allocated lazily.
  Tensor& accumulator(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    const Tensor* parameter = nullptr;
  };

  std::vector<Node> nodes_;
  bool differentiated_ = false;
};

// ---- ops ------------------------------------------------------------------
// All ops record onto the tape of their first argument.

Var matmul(Var a, Var b);                 // [m x k] . [k x n]
Var linear(Var x, Var weight);            // x . weight^T; [B x in] . [out x in]^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                    // Hadamard
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
inline Var hinge(Var x) { return relu(x); }  // max(0, x)
Var sum(Var x);                           // -> scalar
Var mean(Var x);                          // -> scalar
// Row-wise L2 distance. [d],[d] -> scalar; [B x d],[B x d] -> [B].
// Gradient at zero distance is zero.
Var euclidean_distance(Var a, Var b);
Var squared_distance(Var a, Var b);
// Mean softmax cross-entropy of logits [B x C] (or [C]) against labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);
Var softmax_cross_entropy(Var logits, int label);

// ---- plain tensor helpers (no tape) ----------------------------------------
std::vector<double> softmax(std::span<const double> logits);
std::size_t argmax(std::span<const double> values);

}  // namespace qdm
