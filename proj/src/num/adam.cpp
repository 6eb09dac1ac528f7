#include "protofew/num/adam.hpp"

#include <cmath>
#include <string>

namespace protofew::num {

template <typename T>
Adam<T>::Adam(std::vector<Var<T>> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.lr >= 0) || !(options_.beta1 > 0 && options_.beta1 < 1) ||
      !(options_.beta2 > 0 && options_.beta2 < 1) || !(options_.epsilon > 0)) {
    throw ContractViolation("Adam: invalid hyperparameters");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

template <typename T>
void Adam<T>::step(std::span<const Tensor<T>> grads) {
  if (grads.size() != params_.size()) {
    throw ContractViolation("Adam::step: " + std::to_string(grads.size()) +
                            " gradients for " + std::to_string(params_.size()) +
                            " parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params_[i].shape()) {
      throw ContractViolation("Adam::step: gradient shape " +
                              shape_str(grads[i].shape()) + " vs parameter " +
                              shape_str(params_[i].shape()));
    }
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& p = params_[i].mutable_value();
    Tensor<T>& m = m_[i];
    Tensor<T>& v = v_[i];
    const Tensor<T>& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = static_cast<T>(b1 * m[k] + (1.0 - b1) * g[k]);
      v[k] = static_cast<T>(b2 * v[k] + (1.0 - b2) * g[k] * g[k]);
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] = static_cast<T>(p[k] - options_.lr * mhat / (std::sqrt(vhat) + options_.epsilon));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace protofew::num
