#include "protofew/ssl/loss.hpp"

#include <string>

#include "protofew/errors.hpp"

namespace protofew::ssl {

using num::Var;

namespace {

template <typename T>
void check_grid(const Var<T>& grid, std::size_t batch, std::size_t dim, const char* op) {
  const auto& s = grid.shape();
  if (s.size() != 4 || s[0] != batch || s[1] != dim || s[2] != s[3]) {
    throw ContractViolation(std::string(op) + ": expected local grid [" + std::to_string(batch) +
                            "," + std::to_string(dim) + ",s,s], got " + num::shape_str(s));
  }
}

}  // namespace

template <typename T>
Var<T> score_pairs(const Var<T>& a, const Var<T>& b, const ScoreOptions& options) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape() != b.shape()) {
    throw ContractViolation("score_pairs: features must both be [B,D], got " +
                            num::shape_str(a.shape()) + " and " + num::shape_str(b.shape()));
  }
  Var<T> dots = num::dot_product_pairwise(a, b);
  if (options.clip <= 0) return dots;
  const T c = static_cast<T>(options.clip);
  return num::scale(num::tanh(num::scale(dots, T(1) / c)), c);
}

template <typename T>
Var<T> nce_loss(const Var<T>& table) {
  const auto& s = table.shape();
  if (s.size() != 2 || s[0] != s[1]) {
    throw ContractViolation("nce_loss: score table must be square, got " + num::shape_str(s));
  }
  if (s[0] < 2) throw ContractViolation("nce_loss: batch size must be at least 2 (no negatives)");
  // -log softmax_ii = lse_i - s_ii
  return num::mean(num::sub(num::log_sum_exp(table, 1), num::diagonal(table)));
}

template <typename T>
Var<T> global_local_nce(const Var<T>& global_a, const Var<T>& local_b,
                        const ScoreOptions& options) {
  if (global_a.shape().size() != 2) {
    throw ContractViolation("global_local_nce: global features must be [B,D], got " +
                            num::shape_str(global_a.shape()));
  }
  check_grid(local_b, global_a.shape()[0], global_a.shape()[1], "global_local_nce");
  const std::size_t positions = local_b.shape()[2] * local_b.shape()[3];
  Var<T> total;
  for (std::size_t p = 0; p < positions; ++p) {
    Var<T> term = nce_loss(score_pairs(global_a, num::select_position(local_b, p), options));
    total = total.defined() ? num::add(total, term) : term;
  }
  return num::scale(total, T(1) / static_cast<T>(positions));
}

template <typename T>
Var<T> local_local_nce(const Var<T>& local_a, const Var<T>& local_b,
                       const ScoreOptions& options) {
  if (local_a.shape().size() != 4) {
    throw ContractViolation("local_local_nce: expected [B,D,s,s], got " +
                            num::shape_str(local_a.shape()));
  }
  check_grid(local_a, local_a.shape()[0], local_a.shape()[1], "local_local_nce");
  if (local_b.shape() != local_a.shape()) {
    throw ContractViolation("local_local_nce: scale mismatch " + num::shape_str(local_a.shape()) +
                            " vs " + num::shape_str(local_b.shape()));
  }
  const std::size_t positions = local_a.shape()[2] * local_a.shape()[3];
  Var<T> total;
  for (std::size_t p = 0; p < positions; ++p) {
    Var<T> term = nce_loss(score_pairs(num::select_position(local_a, p),
                                       num::select_position(local_b, p), options));
    total = total.defined() ? num::add(total, term) : term;
  }
  return num::scale(total, T(1) / static_cast<T>(positions));
}

template <typename T>
AmdimTerms<T> amdim_terms(const MultiScaleFeatures<T>& fa, const MultiScaleFeatures<T>& fb,
                          const ScoreOptions& options) {
  return {global_local_nce(fa.global, fb.local_1, options),
          global_local_nce(fa.global, fb.local_2, options),
          local_local_nce(fa.local_1, fb.local_1, options)};
}

template <typename T>
Var<T> amdim_loss(const MultiScaleFeatures<T>& fa, const MultiScaleFeatures<T>& fb,
                  const ScoreOptions& options) {
  const auto ab = amdim_terms(fa, fb, options);
  const auto ba = amdim_terms(fb, fa, options);
  Var<T> forward = num::add(num::add(ab.global_local_1, ab.global_local_2), ab.local_1_local_1);
  Var<T> mirror = num::add(num::add(ba.global_local_1, ba.global_local_2), ba.local_1_local_1);
  return num::scale(num::add(forward, mirror), T(0.5));
}

#define PROTOFEW_INSTANTIATE(T)                                                              \
  template Var<T> score_pairs(const Var<T>&, const Var<T>&, const ScoreOptions&);            \
  template Var<T> nce_loss(const Var<T>&);                                                   \
  template Var<T> global_local_nce(const Var<T>&, const Var<T>&, const ScoreOptions&);       \
  template Var<T> local_local_nce(const Var<T>&, const Var<T>&, const ScoreOptions&);        \
  template AmdimTerms<T> amdim_terms(const MultiScaleFeatures<T>&, const MultiScaleFeatures<T>&, \
                                     const ScoreOptions&);                                   \
  template Var<T> amdim_loss(const MultiScaleFeatures<T>&, const MultiScaleFeatures<T>&,     \
                             const ScoreOptions&);

PROTOFEW_INSTANTIATE(float)
PROTOFEW_INSTANTIATE(double)

}  // namespace protofew::ssl
