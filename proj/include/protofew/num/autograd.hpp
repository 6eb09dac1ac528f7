#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "protofew/num/tensor.hpp"

namespace protofew::num {

template <typename T>
struct Node {
  Tensor<T> value;
  // Adjoint; allocated lazily during backward, released for interior nodes
  // once propagated.
  Tensor<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  std::uint64_t last_pass = 0;

  /// Adjoint buffer of this node, zero-filled on first touch.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Define-by-run graph handle. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  /// Result of an op. Records the edge only when grad mode is on and some
  /// parent requires grad.
  static Var from_op(Tensor<T> value, const char* op,
                     std::vector<Var> parents,
                     std::function<void(Node<T>&)> backward_fn);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

bool grad_enabled();

/// Disables edge recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse sweep from a scalar loss. Every reachable node that requires grad
/// ends with a fresh adjoint (previous adjoints are discarded).
template <typename T>
std::uint64_t backward(const Var<T>& loss);

/// Gradients of `loss` for each entry of `wrt`; zeros for unreachable ones.
template <typename T>
std::vector<Tensor<T>> gradients(const Var<T>& loss,
                                 std::span<const Var<T>> wrt);

template <typename T>
Var<T> Var<T>::from_op(Tensor<T> value, const char* op,
                       std::vector<Var> parents,
                       std::function<void(Node<T>&)> backward_fn) {
  Var out(std::move(value), false);
  out.node_->op = op;
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward_fn = std::move(backward_fn);
  return out;
}

}  // namespace protofew::num
