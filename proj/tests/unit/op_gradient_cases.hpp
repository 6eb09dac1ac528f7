#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>

#include "grad_check_util.hpp"

namespace protofew::testing {

inline Tensor<double> away_from_zero(Tensor<double> t) {
  for (auto& v : t.data()) {
    if (std::abs(v) < 0.05) v = v < 0 ? -0.05 - v : 0.05 + v;
  }
  return t;
}

using OpResult = std::function<void(const char* op, double max_relative_error)>;

/// One randomized gradient check per differentiable primitive.
inline void check_every_op(std::uint64_t seed, const OpResult& result) {
  using namespace num;
  std::mt19937_64 rng(seed);
  auto check = [&](const char* name, const LossFn& loss, const std::vector<Tensor<double>>& inputs) {
    result(name, max_grad_error(loss, inputs));
  };
  auto w = [&](std::size_t n) { return random_tensor({n}, rng); };

  {
    auto r = w(8);
    check("matmul", [&](auto& v) { return weighted_sum(matmul(v[0], v[1]), r); },
          {random_tensor({2, 3}, rng), random_tensor({3, 4}, rng)});
  }
  {
    auto r = w(2 * 3 * 3 * 3);
    check("conv2d", [&](auto& v) {
            return weighted_sum(conv2d(v[0], v[1], v[2], {2, 1}), r);
          },
          {random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
           random_tensor({3}, rng)});
  }
  {
    auto r = w(12);
    check("relu", [&](auto& v) { return weighted_sum(relu(v[0]), r); },
          {away_from_zero(random_tensor({3, 4}, rng))});
  }
  {
    auto r = w(12);
    check("tanh", [&](auto& v) { return weighted_sum(tanh(v[0]), r); },
          {random_tensor({3, 4}, rng, -2, 2)});
  }
  {
    auto r = w(6);
    check("global_avg_pool",
          [&](auto& v) { return weighted_sum(global_avg_pool(v[0]), r); },
          {random_tensor({2, 3, 4, 4}, rng)});
  }
  {
    auto r = w(2 * 2 * 3 * 3);
    check("adaptive_avg_pool",
          [&](auto& v) { return weighted_sum(adaptive_avg_pool(v[0], 3), r); },
          {random_tensor({2, 2, 5, 5}, rng)});
  }
  {
    auto r = w(6);
    check("select_position",
          [&](auto& v) { return weighted_sum(select_position(v[0], 5), r); },
          {random_tensor({2, 3, 3, 3}, rng)});
  }
  {
    auto r = w(6);
    check("linear", [&](auto& v) { return weighted_sum(linear(v[0], v[1], v[2]), r); },
          {random_tensor({2, 4}, rng), random_tensor({3, 4}, rng), random_tensor({3}, rng)});
  }
  {
    auto r = w(6);
    check("add+sub", [&](auto& v) { return weighted_sum(sub(add(v[0], v[1]), v[2]), r); },
          {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng), random_tensor({1}, rng)});
  }
  {
    auto r = w(2 * 3 * 4);
    check("add_bias", [&](auto& v) { return weighted_sum(add_bias(v[0], v[1]), r); },
          {random_tensor({2, 3, 2, 2}, rng), random_tensor({3}, rng)});
  }
  {
    auto r = w(6);
    check("scale", [&](auto& v) { return weighted_sum(scale(v[0], 1.7), r); },
          {random_tensor({2, 3}, rng)});
  }
  for (std::size_t axis : {0u, 1u}) {
    auto r = w(12);
    check("softmax", [&](auto& v) { return weighted_sum(softmax(v[0], axis), r); },
          {random_tensor({3, 4}, rng, -3, 3)});
    auto r2 = w(axis == 1 ? 3 : 4);
    check("log_sum_exp",
          [&](auto& v) { return weighted_sum(log_sum_exp(v[0], axis), r2); },
          {random_tensor({3, 4}, rng, -3, 3)});
  }
  {
    auto r = w(12);
    check("squared_euclidean_pairwise",
          [&](auto& v) { return weighted_sum(squared_euclidean_pairwise(v[0], v[1]), r); },
          {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng)});
    check("dot_product_pairwise",
          [&](auto& v) { return weighted_sum(dot_product_pairwise(v[0], v[1]), r); },
          {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng)});
  }
  {
    auto r = w(15);
    check("l2_normalize", [&](auto& v) { return weighted_sum(l2_normalize(v[0]), r); },
          {random_tensor({3, 5}, rng)});
  }
  {
    check("mean", [&](auto& v) { return mean(v[0]); }, {random_tensor({3, 5}, rng)});
    auto r = w(4);
    check("diagonal", [&](auto& v) { return weighted_sum(diagonal(v[0]), r); },
          {random_tensor({4, 4}, rng)});
    const std::vector<std::size_t> idx{2, 0, 3};
    auto r3 = w(3);
    check("pick", [&](auto& v) { return weighted_sum(pick<double>(v[0], idx), r3); },
          {random_tensor({3, 4}, rng)});
    const std::vector<std::size_t> rows{1, 1, 0};
    auto r4 = w(3 * 2 * 2);
    check("gather_rows",
          [&](auto& v) { return weighted_sum(gather_rows<double>(v[0], rows), r4); },
          {random_tensor({2, 2, 2}, rng)});
    auto r5 = w(6);
    check("sqrt", [&](auto& v) { return weighted_sum(sqrt(v[0], 1e-12), r5); },
          {random_tensor({2, 3}, rng, 0.2, 3)});
  }
  for (bool training : {true, false}) {
    auto r = w(4 * 3 * 2 * 2);
    BatchNormStats<double> stats{random_tensor({3}, rng), random_tensor({3}, rng, 0.5, 2)};
    check(training ? "batch_norm(train)" : "batch_norm(eval)",
          [&](auto& v) {
            return weighted_sum(batch_norm(v[0], v[1], v[2], stats, {training, 0.1, 1e-5}), r);
          },
          {random_tensor({4, 3, 2, 2}, rng), random_tensor({3}, rng, 0.5, 1.5),
           random_tensor({3}, rng)});
  }
}

}  // namespace protofew::testing
