#pragma once

#include <span>
#include <vector>

#include "protofew/num/ops.hpp"

namespace protofew::meta {

enum class Distance { SquaredEuclidean, Euclidean };

template <typename T>
struct PrototypeSet {
  num::Var<T> prototypes;  // [K, D]
  std::vector<std::size_t> class_map;
};

/// Row k is the mean of the support rows labelled k. Differentiable.
template <typename T>
PrototypeSet<T> compute_prototypes(const num::Var<T>& support, std::span<const std::size_t> labels,
                                   std::size_t way, std::vector<std::size_t> class_map = {});

/// [Q, K] distances between query rows and prototypes.
template <typename T>
num::Var<T> prototype_distances(const num::Var<T>& query, const PrototypeSet<T>& prototypes,
                                Distance distance = Distance::SquaredEuclidean);

/// [Q, K] softmax over -d.
template <typename T>
num::Var<T> classify_query(const num::Var<T>& query, const PrototypeSet<T>& prototypes,
                           Distance distance = Distance::SquaredEuclidean);

/// Mean over queries of d(q, c_y) + log sum_k exp(-d(q, c_k)).
template <typename T>
num::Var<T> meta_loss(const num::Var<T>& query, std::span<const std::size_t> labels,
                      const PrototypeSet<T>& prototypes,
                      Distance distance = Distance::SquaredEuclidean);

/// Row-wise argmax with the lowest index winning ties.
template <typename T>
std::vector<std::size_t> argmax_rows(const num::Tensor<T>& scores);

/// Predictions from distances (nearest prototype, lowest index on ties).
template <typename T>
std::vector<std::size_t> nearest_prototype(const num::Tensor<T>& distances);

}  // namespace protofew::meta
