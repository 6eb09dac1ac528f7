#include "protofew/meta/prototypes.hpp"

#include <string>

#include "protofew/errors.hpp"

namespace protofew::meta {

using num::Tensor;
using num::Var;

template <typename T>
PrototypeSet<T> compute_prototypes(const Var<T>& support, std::span<const std::size_t> labels,
                                   std::size_t way, std::vector<std::size_t> class_map) {
  if (support.shape().size() != 2) {
    throw ContractViolation("compute_prototypes: support must be [N,D], got " +
                            num::shape_str(support.shape()));
  }
  const std::size_t n = support.shape()[0];
  if (labels.size() != n) throw ContractViolation("compute_prototypes: label count mismatch");
  if (way == 0) throw ContractViolation("compute_prototypes: way must be positive");
  std::vector<std::size_t> count(way, 0);
  for (std::size_t l : labels) {
    if (l >= way) {
      throw ContractViolation("compute_prototypes: label " + std::to_string(l) + " outside [0," +
                              std::to_string(way) + ")");
    }
    ++count[l];
  }
  for (std::size_t k = 0; k < way; ++k) {
    if (count[k] == 0) {
      throw ContractViolation("compute_prototypes: class " + std::to_string(k) +
                              " has no support embedding");
    }
  }
  Tensor<T> averaging({way, n}, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    averaging[labels[i] * n + i] = T(1) / static_cast<T>(count[labels[i]]);
  }
  if (class_map.empty()) {
    class_map.resize(way);
    for (std::size_t k = 0; k < way; ++k) class_map[k] = k;
  }
  return {num::matmul(Var<T>(std::move(averaging)), support), std::move(class_map)};
}

template <typename T>
Var<T> prototype_distances(const Var<T>& query, const PrototypeSet<T>& prototypes,
                           Distance distance) {
  Var<T> d = num::squared_euclidean_pairwise(query, prototypes.prototypes);
  if (distance == Distance::Euclidean) d = num::sqrt(d, T(1e-12));
  return d;
}

template <typename T>
Var<T> classify_query(const Var<T>& query, const PrototypeSet<T>& prototypes, Distance distance) {
  return num::softmax(num::scale(prototype_distances(query, prototypes, distance), T(-1)), 1);
}

template <typename T>
Var<T> meta_loss(const Var<T>& query, std::span<const std::size_t> labels,
                 const PrototypeSet<T>& prototypes, Distance distance) {
  const std::size_t way = prototypes.prototypes.shape()[0];
  if (query.shape().size() != 2 || labels.size() != query.shape()[0]) {
    throw ContractViolation("meta_loss: need one label per query row");
  }
  for (std::size_t l : labels) {
    if (l >= way) {
      throw ContractViolation("meta_loss: label " + std::to_string(l) + " outside [0," +
                              std::to_string(way) + ")");
    }
  }
  const Var<T> d = prototype_distances(query, prototypes, distance);
  return num::mean(num::add(num::pick(d, labels), num::log_sum_exp(num::scale(d, T(-1)), 1)));
}

template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& scores) {
  if (scores.rank() != 2) throw ContractViolation("argmax_rows: expected a 2-D tensor");
  const std::size_t rows = scores.dim(0), cols = scores.dim(1);
  std::vector<std::size_t> out(rows, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 1; k < cols; ++k) {
      if (scores[i * cols + k] > scores[i * cols + out[i]]) out[i] = k;
    }
  }
  return out;
}

template <typename T>
std::vector<std::size_t> nearest_prototype(const Tensor<T>& distances) {
  if (distances.rank() != 2) throw ContractViolation("nearest_prototype: expected a 2-D tensor");
  const std::size_t rows = distances.dim(0), cols = distances.dim(1);
  std::vector<std::size_t> out(rows, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 1; k < cols; ++k) {
      if (distances[i * cols + k] < distances[i * cols + out[i]]) out[i] = k;
    }
  }
  return out;
}

#define PROTOFEW_INSTANTIATE(T)                                                              \
  template PrototypeSet<T> compute_prototypes(const Var<T>&, std::span<const std::size_t>,  \
                                              std::size_t, std::vector<std::size_t>);       \
  template Var<T> prototype_distances(const Var<T>&, const PrototypeSet<T>&, Distance);      \
  template Var<T> classify_query(const Var<T>&, const PrototypeSet<T>&, Distance);           \
  template Var<T> meta_loss(const Var<T>&, std::span<const std::size_t>, const PrototypeSet<T>&, \
                            Distance);                                                       \
  template std::vector<std::size_t> argmax_rows(const Tensor<T>&);                           \
  template std::vector<std::size_t> nearest_prototype(const Tensor<T>&);

PROTOFEW_INSTANTIATE(float)
PROTOFEW_INSTANTIATE(double)

}  // namespace protofew::meta
