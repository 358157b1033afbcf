#include "qdm/losses.hpp"

#include <algorithm>
#include <sstream>

#include "qdm/error.hpp"

namespace qdm {

void QuadrupletLossConfig::validate(bool strict) const {
  std::ostringstream err;
  if (margin < 0.0 || minor_margin < 0.0) err << "margins must be nonnegative; ";
  if (beta < 0.0) err << "beta must be nonnegative; ";
  if (strict) {
    if (!(minor_margin > margin)) err << "M2 (" << minor_margin << ") must exceed M (" << margin << "); ";
    if (!(lambda_pos > 1.0)) err << "lambda_pos (" << lambda_pos << ") must exceed 1; ";
    if (!(lambda_minor > 1.0)) err << "lambda_minor (" << lambda_minor << ") must exceed 1; ";
  } else {
    if (minor_margin < margin) err << "M2 (" << minor_margin << ") must be at least M (" << margin << "); ";
    if (lambda_pos < 1.0) err << "lambda_pos (" << lambda_pos << ") must be at least 1; ";
    if (lambda_minor < 1.0) err << "lambda_minor (" << lambda_minor << ") must be at least 1; ";
  }
  const std::string msg = err.str();
  if (!msg.empty()) throw ConfigError("invalid quadruplet loss config: " + msg.substr(0, msg.size() - 2));
}

namespace {

std::size_t row_count(const Tensor& t) { return t.rank() == 2 ? t.rows() : 1; }

// Constant tensor shaped like a distance output for `rows` tuples.
Tensor like_distance(const Tensor& embedding, std::vector<double> values) {
  if (embedding.rank() == 2) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
  }
  return Tensor::scalar(values.at(0));
}

}  // namespace

Var contrastive_loss(Var e1, Var e2, bool same_class, double margin) {
  const std::vector<std::uint8_t> y(row_count(e1.value()), same_class ? 1 : 0);
  return contrastive_loss(e1, e2, y, margin);
}

Var contrastive_loss(Var e1, Var e2, std::span<const std::uint8_t> same_class, double margin) {
  Tape& t = *e1.tape;
  const std::size_t rows = row_count(t.value(e1));
  if (same_class.size() != rows) throw DimensionError("contrastive_loss: label count differs from rows");
  Var d = euclidean_distance(e1, e2);
  std::vector<double> y(rows), not_y(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    y[i] = same_class[i] ? 1.0 : 0.0;
    not_y[i] = 1.0 - y[i];
  }
  Var pull = mul(t.constant(like_distance(t.value(e1), y)), d);
  Var push = mul(t.constant(like_distance(t.value(e1), not_y)), hinge(add_scalar(scale(d, -1.0), margin)));
  return mean(add(pull, push));
}

Var triplet_loss(Var anchor, Var positive, Var negative, double margin) {
  Var dp = squared_distance(anchor, positive);
  Var dn = squared_distance(anchor, negative);
  return mean(hinge(add_scalar(sub(dp, dn), margin)));
}

QuadrupletLoss quadruplet_loss(Var anchor, Var positive, Var negative, Var minor, std::span<const std::uint8_t> gamma,
                               const QuadrupletLossConfig& cfg) {
  Tape& t = *anchor.tape;
  const Tensor av = t.value(anchor);
  const std::size_t rows = row_count(av);
  if (gamma.size() != rows)
    throw DimensionError("quadruplet_loss: " + std::to_string(gamma.size()) + " gamma flags for " +
                         std::to_string(rows) + " tuples");
  std::vector<double> pos_weight(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    if (gamma[i] > 1) throw ContractError("gamma must be 0 or 1");
    const double g = gamma[i] ? 1.0 : 0.0;
    pos_weight[i] = (1.0 - g) + cfg.lambda_pos * g;
  }
  Var d_pos = euclidean_distance(anchor, positive);
  Var d_neg = euclidean_distance(anchor, negative);
  Var d_minor = euclidean_distance(anchor, minor);

  Var l_pos = mul(t.constant(like_distance(av, pos_weight)), d_pos);
  Var l_neg = hinge(add_scalar(scale(d_neg, -1.0), cfg.margin));
  Var l_minor = scale(hinge(add_scalar(scale(d_minor, -1.0), cfg.minor_margin)), cfg.lambda_minor);

  QuadrupletLoss out;
  out.total = mean(scale(add(add(l_pos, l_neg), l_minor), 1.0 / 3.0));
  out.pos = mean(l_pos);
  out.neg = mean(l_neg);
  out.minor = mean(l_minor);
  return out;
}

Var combined_loss(Var softmax_term, Var quadruplet_term, double beta) {
  if (softmax_term.value().size() != 1 || quadruplet_term.value().size() != 1)
    throw ContractError("combined_loss: both terms must be scalar");
  return add(softmax_term, scale(quadruplet_term, beta));
}

double quadruplet_loss_value(double d_pos, double d_neg, double d_minor, bool gamma, const QuadrupletLossConfig& cfg) {
  const double g = gamma ? 1.0 : 0.0;
  const double l_pos = (1.0 - g) * d_pos + cfg.lambda_pos * g * d_pos;
  const double l_neg = std::max(0.0, cfg.margin - d_neg);
  const double l_minor = std::max(0.0, cfg.minor_margin - d_minor) * cfg.lambda_minor;
  return (l_pos + l_neg + l_minor) / 3.0;
}

}  // namespace qdm
