#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "protofew/num/autograd.hpp"

// Differentiable primitives. Every op validates input shapes (throwing
// ContractViolation naming the op and the offending shapes) and rejects
// non-finite inputs with NumericDomainError. Broadcasting is limited to a
// shape-{1} operand in add/sub and to the channel bias in add_bias.
namespace protofew::num {

// [m,k] x [k,n] -> [m,n]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

// x[n,in], weight[out,in], bias[out] (bias may be undefined) -> [n,out]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// Output extent along one spatial axis.
inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel,
                                   std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// x[N,C,H,W], weight[O,C,kh,kw], bias[O] (may be undefined) -> [N,O,Ho,Wo]
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              Conv2dOptions options);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> tanh(const Var<T>& x);

// [N,C,H,W] -> [N,C]
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

/// Region pooling to an out x out grid; cell i spans
/// [floor(i*H/out), ceil((i+1)*H/out)).
template <typename T>
Var<T> adaptive_avg_pool(const Var<T>& x, std::size_t out);

// [N,C,H,W] -> [N,C], the feature column at flat spatial position p.
template <typename T>
Var<T> select_position(const Var<T>& x, std::size_t p);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);

// x[N,C,...] + bias[C]
template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias);

template <typename T>
Var<T> scale(const Var<T>& x, T factor);

// Elementwise sqrt(x + eps) for x >= 0; eps keeps the derivative finite at 0.
template <typename T>
Var<T> sqrt(const Var<T>& x, T eps);

// 2-D softmax along axis 0 or 1.
template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis);

// 2-D log-sum-exp reducing axis 0 ([n,m] -> [m]) or axis 1 ([n,m] -> [n]).
template <typename T>
Var<T> log_sum_exp(const Var<T>& x, std::size_t axis);

// a[n,d], b[m,d] -> [n,m] with entry sum_k (a_ik - b_jk)^2.
template <typename T>
Var<T> squared_euclidean_pairwise(const Var<T>& a, const Var<T>& b);

// a[n,d], b[m,d] -> a b^T
template <typename T>
Var<T> dot_product_pairwise(const Var<T>& a, const Var<T>& b);

// Row-wise x / max(||x||, eps) on [n,d].
template <typename T>
Var<T> l2_normalize(const Var<T>& x, T eps = T(1e-12));

template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

// [n,n] -> [n]
template <typename T>
Var<T> diagonal(const Var<T>& x);

// x[n,m], index[n] -> [n] with entries x[i, index[i]].
template <typename T>
Var<T> pick(const Var<T>& x, std::span<const std::size_t> index);

// Rows index[i] of x[N,...] -> [index.size(),...]; repeats allowed.
template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> index);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Running statistics owned by a batch-norm layer.
template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

struct BatchNormOptions {
  bool training = false;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization of x[N,C] or x[N,C,H,W]. Training mode uses
/// batch statistics and updates `stats` in place (unbiased running
/// variance); evaluation mode uses the frozen running statistics.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormStats<T>& stats, BatchNormOptions options);

}  // namespace protofew::num
