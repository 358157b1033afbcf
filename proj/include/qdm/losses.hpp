#pragma once

#include <span>
#include <vector>

#include "qdm/autodiff.hpp"

namespace qdm {

// Margins and weights of the quadruplet objective. Defaults are the TE
// settings (M=20, M2=50, lambda_pos=50, lambda_minor=20, beta=5e-4).
struct QuadrupletLossConfig {
  double margin = 20.0;        // M: anchor-negative margin
  double minor_margin = 50.0;  // M2: anchor-minor margin
  double lambda_pos = 50.0;
  double lambda_minor = 20.0;
  double beta = 5e-4;  // weight of the quadruplet term in the total loss

  // Strict: M2 > M, lambda_pos > 1, lambda_minor > 1, all nonnegative.
  // Relaxed (ablation presets): M2 >= M, lambdas >= 1.
  void validate(bool strict = true) const;

  static QuadrupletLossConfig te_defaults() { return {}; }
  static QuadrupletLossConfig cwru_defaults() { return {5.0, 10.0, 10.0, 10.0, 1e-3}; }
};

// Y*D + (1-Y)*max(0, margin - D), D = ||e1 - e2||. Batched rows are averaged.
Var contrastive_loss(Var e1, Var e2, bool same_class, double margin);
Var contrastive_loss(Var e1, Var e2, std::span<const std::uint8_t> same_class, double margin);

// max(0, ||a-p||^2 - ||a-n||^2 + margin), averaged over rows.
Var triplet_loss(Var anchor, Var positive, Var negative, double margin);

struct QuadrupletLoss {
  Var total;       // mean over tuples of (L_pos + L_neg + L_minor) / 3
  Var pos;         // mean L_pos
  Var neg;         // mean L_neg
  Var minor;       // mean L_minor
};

// Embeddings are [d] (one tuple, gamma.size()==1) or [B x d].
QuadrupletLoss quadruplet_loss(Var anchor, Var positive, Var negative, Var minor, std::span<const std::uint8_t> gamma,
                               const QuadrupletLossConfig& cfg);

// L_softmax + beta * L_quadruplet.
Var combined_loss(Var softmax_term, Var quadruplet_term, double beta);

// Scalar forms for reporting and tests.
double quadruplet_loss_value(double d_pos, double d_neg, double d_minor, bool gamma, const QuadrupletLossConfig& cfg);

}  // namespace qdm
