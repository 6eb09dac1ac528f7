#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "protofew/num/autograd.hpp"

namespace protofew::num {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list. Moments are held in the
/// parameters' own precision.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Var<T>> params, AdamOptions options);

  /// One update with `grads[i]` applied to `params()[i]`.
  void step(std::span<const Tensor<T>> grads);

  const std::vector<Var<T>>& params() const { return params_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }
  std::uint64_t step_count() const { return t_; }
  const AdamOptions& options() const { return options_; }

 private:
  std::vector<Var<T>> params_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::uint64_t t_ = 0;
  AdamOptions options_;
};

}  // namespace protofew::num
