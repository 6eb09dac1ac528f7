#include "protofew/num/autograd.hpp"

#include <atomic>
#include <unordered_set>

namespace protofew::num {

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_pass_counter{0};
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
std::uint64_t backward(const Var<T>& loss) {
  if (!loss.defined()) throw ContractViolation("backward: undefined loss");
  if (loss.size() != 1) {
    throw ContractViolation("backward: loss must be scalar, got shape " +
                            shape_str(loss.shape()));
  }
  if (!loss.value().all_finite()) {
    throw NumericDomainError("backward: non-finite loss");
  }
  const std::uint64_t pass = ++g_pass_counter;

  // Iterative post-order DFS over nodes that require grad.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  if (loss.requires_grad()) {
    stack.emplace_back(loss.node(), 0);
    visited.insert(loss.node());
  }
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (Node<T>* n : order) {
    n->grad = Tensor<T>();
    n->last_pass = pass;
  }
  if (order.empty()) return pass;
  loss.node()->grad_buffer()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward_fn) continue;
    n->grad_buffer();
    n->backward_fn(*n);
    n->grad = Tensor<T>();
  }
  return pass;
}

template <typename T>
std::vector<Tensor<T>> gradients(const Var<T>& loss,
                                 std::span<const Var<T>> wrt) {
  const std::uint64_t pass = backward(loss);
  std::vector<Tensor<T>> out;
  out.reserve(wrt.size());
  for (const auto& v : wrt) {
    Node<T>* n = v.node();
    if (n->last_pass == pass && !n->grad.empty()) {
      out.push_back(n->grad);
    } else {
      out.emplace_back(v.shape());
    }
  }
  return out;
}

template std::uint64_t backward<float>(const Var<float>&);
template std::uint64_t backward<double>(const Var<double>&);
template std::vector<Tensor<float>> gradients<float>(
    const Var<float>&, std::span<const Var<float>>);
template std::vector<Tensor<double>> gradients<double>(
    const Var<double>&, std::span<const Var<double>>);

}  // namespace protofew::num
