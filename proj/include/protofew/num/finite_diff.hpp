#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "protofew/errors.hpp"
#include "protofew/num/tensor.hpp"

namespace protofew::num {

/// Central-difference estimate of the gradient of a scalar function.
/// `f` maps a Tensor<T> of x's shape to a finite T.
template <typename T, typename F>
Tensor<T> finite_diff_gradient(F&& f, Tensor<T> x, T step) {
  if (!(step > T(0))) throw ContractViolation("finite_diff_gradient: step must be positive");
  auto eval = [&](const Tensor<T>& at) {
    const T v = f(at);
    if (!std::isfinite(v)) {
      throw NumericDomainError("finite_diff_gradient: non-finite function value");
    }
    return v;
  };
  Tensor<T> grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T orig = x[i];
    x[i] = orig + step;
    const T up = eval(x);
    x[i] = orig - step;
    const T down = eval(x);
    x[i] = orig;
    grad[i] = (up - down) / (T(2) * step);
  }
  return grad;
}

struct GradientComparison {
  double max_relative_error = 0;
  std::size_t checked = 0;  // entries with |grad| above the floor
  std::size_t worst_index = 0;
};

/// Elementwise |a - n| / max(|a|, |n|) over entries where either side
/// exceeds `floor` in magnitude.
template <typename T>
GradientComparison compare_gradients(const Tensor<T>& analytic,
                                     const Tensor<T>& numeric, double floor) {
  if (analytic.shape() != numeric.shape()) {
    throw ContractViolation("compare_gradients: shape " + shape_str(analytic.shape()) +
                            " vs " + shape_str(numeric.shape()));
  }
  GradientComparison out;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double scale = std::max(std::abs(a), std::abs(n));
    if (scale <= floor) continue;
    ++out.checked;
    const double rel = std::abs(a - n) / scale;
    if (rel > out.max_relative_error) {
      out.max_relative_error = rel;
      out.worst_index = i;
    }
  }
  return out;
}

}  // namespace protofew::num
