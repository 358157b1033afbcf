#pragma once

// Reference computations used to check the library: central finite
// differences and brute-force recounts.

#include <algorithm>
#include <cmath>
#include <functional>

#include "qdm/autodiff.hpp"

namespace qdm::testing {

// Central difference of f with respect to every entry of x.
inline Tensor numeric_gradient(Tensor& x, const std::function<double()>& f, double h = 1e-5) {
  Tensor g(x.shape(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace qdm::testing
