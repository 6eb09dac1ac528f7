#include "protofew/num/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace protofew::num {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
CMapMat<T> view(const Tensor<T>& t, std::size_t rows, std::size_t cols,
                std::size_t offset = 0) {
  return CMapMat<T>(t.raw() + offset, static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
}

template <typename T>
MapMat<T> view(Tensor<T>& t, std::size_t rows, std::size_t cols,
               std::size_t offset = 0) {
  return MapMat<T>(t.raw() + offset, static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(cols));
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ContractViolation(std::string(op) + ": incompatible shapes " +
                          shape_str(a) + " and " + shape_str(b));
}

[[noreturn]] void rank_error(const char* op, const Shape& a,
                             std::size_t want) {
  throw ContractViolation(std::string(op) + ": expected rank " +
                          std::to_string(want) + ", got " + shape_str(a));
}

template <typename T>
void require_finite(const char* op, const Var<T>& v) {
  if (!v.value().all_finite()) {
    throw NumericDomainError(std::string(op) + ": non-finite input of shape " +
                             shape_str(v.shape()));
  }
}

template <typename T>
void require_rank(const char* op, const Var<T>& v, std::size_t rank) {
  if (v.shape().size() != rank) rank_error(op, v.shape(), rank);
}

template <typename T>
bool wants(const std::shared_ptr<Node<T>>& p) {
  return p->requires_grad;
}

// Unfold one image [C,H,W] into columns [C*kh*kw, Ho*Wo].
template <typename T>
void im2col(const T* img, std::size_t C, std::size_t H, std::size_t W,
            std::size_t kh, std::size_t kw, std::size_t stride,
            std::size_t pad, std::size_t Ho, std::size_t Wo, T* cols) {
  const std::size_t P = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* row = cols + ((c * kh + ki) * kw + kj) * P;
        for (std::size_t oi = 0; oi < Ho; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + ki) -
                                    static_cast<std::ptrdiff_t>(pad);
          T* out = row + oi * Wo;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(H)) {
            std::fill(out, out + Wo, T(0));
            continue;
          }
          const T* src = img + (c * H + static_cast<std::size_t>(ii)) * W;
          for (std::size_t oj = 0; oj < Wo; ++oj) {
            const std::ptrdiff_t jj =
                static_cast<std::ptrdiff_t>(oj * stride + kj) -
                static_cast<std::ptrdiff_t>(pad);
            out[oj] = (jj < 0 || jj >= static_cast<std::ptrdiff_t>(W))
                          ? T(0)
                          : src[jj];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t C, std::size_t H, std::size_t W,
            std::size_t kh, std::size_t kw, std::size_t stride,
            std::size_t pad, std::size_t Ho, std::size_t Wo, T* img) {
  const std::size_t P = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* row = cols + ((c * kh + ki) * kw + kj) * P;
        for (std::size_t oi = 0; oi < Ho; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + ki) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(H)) continue;
          T* dst = img + (c * H + static_cast<std::size_t>(ii)) * W;
          const T* in = row + oi * Wo;
          for (std::size_t oj = 0; oj < Wo; ++oj) {
            const std::ptrdiff_t jj =
                static_cast<std::ptrdiff_t>(oj * stride + kj) -
                static_cast<std::ptrdiff_t>(pad);
            if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(W)) dst[jj] += in[oj];
          }
        }
      }
    }
  }
}

template <typename T, typename F, typename G>
Var<T> unary(const char* op, const Var<T>& x, F fwd, G dfdx) {
  require_finite(op, x);
  Tensor<T> out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return Var<T>::from_op(std::move(out), op, {x}, [dfdx](Node<T>& self) {
    auto& p = self.parents[0];
    if (!wants(p)) return;
    auto& g = p->grad_buffer();
    const auto& xv = p->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * dfdx(xv[i], self.value[i]);
    }
  });
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.shape()[1] != b.shape()[0]) shape_error("matmul", a.shape(), b.shape());
  require_finite("matmul", a);
  require_finite("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> out({m, n});
  view(out, m, n).noalias() = view(a.value(), m, k) * view(b.value(), k, n);
  return Var<T>::from_op(std::move(out), "matmul", {a, b},
                         [m, k, n](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    auto gy = view(static_cast<const Tensor<T>&>(self.grad), m, n);
    if (wants(pa)) {
      view(pa->grad_buffer(), m, k).noalias() +=
          gy * view(static_cast<const Tensor<T>&>(pb->value), k, n).transpose();
    }
    if (wants(pb)) {
      view(pb->grad_buffer(), k, n).noalias() +=
          view(static_cast<const Tensor<T>&>(pa->value), m, k).transpose() * gy;
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require_rank("linear", x, 2);
  require_rank("linear", weight, 2);
  if (x.shape()[1] != weight.shape()[1]) {
    shape_error("linear", x.shape(), weight.shape());
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.shape().size() != 1 ||
                   bias.shape()[0] != weight.shape()[0])) {
    shape_error("linear", weight.shape(), bias.shape());
  }
  require_finite("linear", x);
  require_finite("linear", weight);
  if (has_bias) require_finite("linear", bias);
  const std::size_t n = x.shape()[0], in = x.shape()[1], out_dim = weight.shape()[0];
  Tensor<T> out({n, out_dim});
  auto y = view(out, n, out_dim);
  y.noalias() = view(x.value(), n, in) * view(weight.value(), out_dim, in).transpose();
  if (has_bias) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += bias.value()[j];
    }
  }
  std::vector<Var<T>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Var<T>::from_op(std::move(out), "linear", std::move(parents),
                         [n, in, out_dim, has_bias](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto gy = view(static_cast<const Tensor<T>&>(self.grad), n, out_dim);
    if (wants(px)) {
      view(px->grad_buffer(), n, in).noalias() +=
          gy * view(static_cast<const Tensor<T>&>(pw->value), out_dim, in);
    }
    if (wants(pw)) {
      view(pw->grad_buffer(), out_dim, in).noalias() +=
          gy.transpose() * view(static_cast<const Tensor<T>&>(px->value), n, in);
    }
    if (has_bias && wants(self.parents[2])) {
      auto& gb = self.parents[2]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += self.grad[i * out_dim + j];
      }
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              Conv2dOptions options) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4);
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (xs[1] != ws[1]) shape_error("conv2d", xs, ws);
  if (options.stride == 0) throw ContractViolation("conv2d: stride must be positive");
  const std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::size_t O = ws[0], kh = ws[2], kw = ws[3];
  if (H + 2 * options.pad < kh || W + 2 * options.pad < kw) {
    shape_error("conv2d", xs, ws);
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != O)) {
    shape_error("conv2d", ws, bias.shape());
  }
  require_finite("conv2d", x);
  require_finite("conv2d", weight);
  if (has_bias) require_finite("conv2d", bias);
  const std::size_t stride = options.stride, pad = options.pad;
  const std::size_t Ho = conv_out_extent(H, kh, stride, pad);
  const std::size_t Wo = conv_out_extent(W, kw, stride, pad);
  const std::size_t P = Ho * Wo, K = C * kh * kw;

  Tensor<T> out({N, O, Ho, Wo});
  std::vector<T> cols(K * P);
  auto wmat = view(weight.value(), O, K);
  for (std::size_t n = 0; n < N; ++n) {
    im2col(x.value().raw() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho,
           Wo, cols.data());
    auto y = view(out, O, P, n * O * P);
    y.noalias() = wmat * CMapMat<T>(cols.data(), static_cast<Eigen::Index>(K),
                                    static_cast<Eigen::Index>(P));
    if (has_bias) {
      for (std::size_t o = 0; o < O; ++o) y.row(static_cast<Eigen::Index>(o)).array() += bias.value()[o];
    }
  }
  std::vector<Var<T>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Var<T>::from_op(std::move(out), "conv2d", std::move(parents),
                         [=](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    std::vector<T> cols_buf(K * P);
    std::vector<T> dcols(K * P);
    const Tensor<T>& xv = px->value;
    for (std::size_t n = 0; n < N; ++n) {
      auto gy = view(static_cast<const Tensor<T>&>(self.grad), O, P, n * O * P);
      if (wants(pw)) {
        im2col(xv.raw() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo,
               cols_buf.data());
        view(pw->grad_buffer(), O, K).noalias() +=
            gy * CMapMat<T>(cols_buf.data(), static_cast<Eigen::Index>(K),
                            static_cast<Eigen::Index>(P)).transpose();
      }
      if (wants(px)) {
        MapMat<T>(dcols.data(), static_cast<Eigen::Index>(K),
                  static_cast<Eigen::Index>(P)).noalias() =
            view(static_cast<const Tensor<T>&>(pw->value), O, K).transpose() * gy;
        col2im(dcols.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
               px->grad_buffer().raw() + n * C * H * W);
      }
    }
    if (has_bias && wants(self.parents[2])) {
      auto& gb = self.parents[2]->grad_buffer();
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < O; ++o) {
          const T* g = self.grad.raw() + (n * O + o) * P;
          T acc = 0;
          for (std::size_t p = 0; p < P; ++p) acc += g[p];
          gb[o] += acc;
        }
      }
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sqrt(const Var<T>& x, T eps) {
  if (!(eps > 0)) throw ContractViolation("sqrt: eps must be positive");
  return unary<T>(
      "sqrt", x,
      [eps](T v) {
        if (v < 0) throw NumericDomainError("sqrt: negative input");
        return std::sqrt(v + eps);
      },
      [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  return unary<T>(
      "scale", x, [factor](T v) { return v * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_rank("global_avg_pool", x, 4);
  require_finite("global_avg_pool", x);
  const auto& s = x.shape();
  const std::size_t NC = s[0] * s[1], P = s[2] * s[3];
  Tensor<T> out({s[0], s[1]});
  for (std::size_t i = 0; i < NC; ++i) {
    const T* src = x.value().raw() + i * P;
    T acc = 0;
    for (std::size_t p = 0; p < P; ++p) acc += src[p];
    out[i] = acc / static_cast<T>(P);
  }
  return Var<T>::from_op(std::move(out), "global_avg_pool", {x},
                         [NC, P](Node<T>& self) {
    auto& px = self.parents[0];
    if (!wants(px)) return;
    auto& g = px->grad_buffer();
    for (std::size_t i = 0; i < NC; ++i) {
      const T v = self.grad[i] / static_cast<T>(P);
      for (std::size_t p = 0; p < P; ++p) g[i * P + p] += v;
    }
  });
}

template <typename T>
Var<T> adaptive_avg_pool(const Var<T>& x, std::size_t out_extent) {
  require_rank("adaptive_avg_pool", x, 4);
  require_finite("adaptive_avg_pool", x);
  const auto& s = x.shape();
  const std::size_t NC = s[0] * s[1], H = s[2], W = s[3];
  if (out_extent == 0 || out_extent > H || out_extent > W) {
    throw ContractViolation("adaptive_avg_pool: cannot pool " + shape_str(s) +
                            " to " + std::to_string(out_extent));
  }
  const std::size_t S = out_extent;
  auto bounds = [](std::size_t i, std::size_t in, std::size_t out) {
    const std::size_t lo = (i * in) / out;
    const std::size_t hi = ((i + 1) * in + out - 1) / out;
    return std::pair{lo, hi};
  };
  Tensor<T> out({s[0], s[1], S, S});
  for (std::size_t i = 0; i < NC; ++i) {
    const T* src = x.value().raw() + i * H * W;
    for (std::size_t oi = 0; oi < S; ++oi) {
      const auto [h0, h1] = bounds(oi, H, S);
      for (std::size_t oj = 0; oj < S; ++oj) {
        const auto [w0, w1] = bounds(oj, W, S);
        T acc = 0;
        for (std::size_t a = h0; a < h1; ++a) {
          for (std::size_t b = w0; b < w1; ++b) acc += src[a * W + b];
        }
        out[(i * S + oi) * S + oj] = acc / static_cast<T>((h1 - h0) * (w1 - w0));
      }
    }
  }
  return Var<T>::from_op(std::move(out), "adaptive_avg_pool", {x},
                         [=](Node<T>& self) {
    auto& px = self.parents[0];
    if (!wants(px)) return;
    auto& g = px->grad_buffer();
    for (std::size_t i = 0; i < NC; ++i) {
      T* dst = g.raw() + i * H * W;
      for (std::size_t oi = 0; oi < S; ++oi) {
        const auto [h0, h1] = bounds(oi, H, S);
        for (std::size_t oj = 0; oj < S; ++oj) {
          const auto [w0, w1] = bounds(oj, W, S);
          const T v = self.grad[(i * S + oi) * S + oj] /
                      static_cast<T>((h1 - h0) * (w1 - w0));
          for (std::size_t a = h0; a < h1; ++a) {
            for (std::size_t b = w0; b < w1; ++b) dst[a * W + b] += v;
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> select_position(const Var<T>& x, std::size_t p) {
  require_rank("select_position", x, 4);
  const auto& s = x.shape();
  const std::size_t N = s[0], C = s[1], P = s[2] * s[3];
  if (p >= P) {
    throw ContractViolation("select_position: position " + std::to_string(p) +
                            " outside " + shape_str(s));
  }
  require_finite("select_position", x);
  Tensor<T> out({N, C});
  for (std::size_t i = 0; i < N * C; ++i) out[i] = x.value()[i * P + p];
  return Var<T>::from_op(std::move(out), "select_position", {x},
                         [N, C, P, p](Node<T>& self) {
    auto& px = self.parents[0];
    if (!wants(px)) return;
    auto& g = px->grad_buffer();
    for (std::size_t i = 0; i < N * C; ++i) g[i * P + p] += self.grad[i];
  });
}

namespace {

template <typename T>
Var<T> add_impl(const char* op, const Var<T>& a, const Var<T>& b, T sign) {
  const bool same = a.shape() == b.shape();
  const bool b_scalar = !same && b.size() == 1;
  const bool a_scalar = !same && !b_scalar && a.size() == 1;
  if (!same && !a_scalar && !b_scalar) shape_error(op, a.shape(), b.shape());
  require_finite(op, a);
  require_finite(op, b);
  const Shape shape = a_scalar ? b.shape() : a.shape();
  Tensor<T> out(shape);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T av = a_scalar ? a.value()[0] : a.value()[i];
    const T bv = b_scalar ? b.value()[0] : b.value()[i];
    out[i] = av + sign * bv;
  }
  return Var<T>::from_op(std::move(out), op, {a, b},
                         [a_scalar, b_scalar, sign, n](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants(pa)) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[a_scalar ? 0 : i] += self.grad[i];
    }
    if (wants(pb)) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[b_scalar ? 0 : i] += sign * self.grad[i];
    }
  });
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return add_impl<T>("add", a, b, T(1));
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return add_impl<T>("sub", a, b, T(-1));
}

template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
  const auto& s = x.shape();
  if (s.size() < 2 || bias.shape().size() != 1 || bias.shape()[0] != s[1]) {
    shape_error("add_bias", s, bias.shape());
  }
  require_finite("add_bias", x);
  require_finite("add_bias", bias);
  const std::size_t N = s[0], C = s[1], inner = x.size() / (N * C);
  Tensor<T> out = x.value();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      T* dst = out.raw() + (n * C + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += bias.value()[c];
    }
  }
  return Var<T>::from_op(std::move(out), "add_bias", {x, bias},
                         [N, C, inner](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pb = self.parents[1];
    if (wants(px)) {
      auto& g = px->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(pb)) {
      auto& g = pb->grad_buffer();
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
          const T* src = self.grad.raw() + (n * C + c) * inner;
          for (std::size_t i = 0; i < inner; ++i) g[c] += src[i];
        }
      }
    }
  });
}

namespace {

// Strides for walking a 2-D tensor along `axis`: `lines` independent
// vectors of length `len`, element j of line l at l*line_stride + j*step.
struct AxisWalk {
  std::size_t lines, len, line_stride, step;
};

AxisWalk axis_walk(const char* op, const Shape& s, std::size_t axis) {
  if (s.size() != 2) rank_error(op, s, 2);
  if (axis == 1) return {s[0], s[1], s[1], 1};
  if (axis == 0) return {s[1], s[0], 1, s[1]};
  throw ContractViolation(std::string(op) + ": axis " + std::to_string(axis) +
                          " out of range for " + shape_str(s));
}

}  // namespace

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const AxisWalk w = axis_walk("softmax", x.shape(), axis);
  require_finite("softmax", x);
  Tensor<T> out(x.shape());
  for (std::size_t l = 0; l < w.lines; ++l) {
    const std::size_t base = l * w.line_stride;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < w.len; ++j) mx = std::max(mx, x.value()[base + j * w.step]);
    T z = 0;
    for (std::size_t j = 0; j < w.len; ++j) {
      const T e = std::exp(x.value()[base + j * w.step] - mx);
      out[base + j * w.step] = e;
      z += e;
    }
    for (std::size_t j = 0; j < w.len; ++j) out[base + j * w.step] /= z;
  }
  return Var<T>::from_op(std::move(out), "softmax", {x}, [w](Node<T>& self) {
    auto& px = self.parents[0];
    if (!wants(px)) return;
    auto& g = px->grad_buffer();
    for (std::size_t l = 0; l < w.lines; ++l) {
      const std::size_t base = l * w.line_stride;
      T dot = 0;
      for (std::size_t j = 0; j < w.len; ++j) {
        const std::size_t k = base + j * w.step;
        dot += self.grad[k] * self.value[k];
      }
      for (std::size_t j = 0; j < w.len; ++j) {
        const std::size_t k = base + j * w.step;
        g[k] += self.value[k] * (self.grad[k] - dot);
      }
    }
  });
}

template <typename T>
Var<T> log_sum_exp(const Var<T>& x, std::size_t axis) {
  const AxisWalk w = axis_walk("log_sum_exp", x.shape(), axis);
  require_finite("log_sum_exp", x);
  Tensor<T> out({w.lines});
  for (std::size_t l = 0; l < w.lines; ++l) {
    const std::size_t base = l * w.line_stride;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < w.len; ++j) mx = std::max(mx, x.value()[base + j * w.step]);
    T z = 0;
    for (std::size_t j = 0; j < w.len; ++j) z += std::exp(x.value()[base + j * w.step] - mx);
    out[l] = mx + std::log(z);
  }
  return Var<T>::from_op(std::move(out), "log_sum_exp", {x}, [w](Node<T>& self) {
    auto& px = self.parents[0];
    if (!wants(px)) return;
    auto& g = px->grad_buffer();
    for (std::size_t l = 0; l < w.lines; ++l) {
      const std::size_t base = l * w.line_stride;
      for (std::size_t j = 0; j < w.len; ++j) {
        const std::size_t k = base + j * w.step;
        g[k] += self.grad[l] * std::exp(px->value[k] - self.value[l]);
      }
    }
  });
}

template <typename T>
Var<T> squared_euclidean_pairwise(const Var<T>& a, const Var<T>& b) {
  require_rank("squared_euclidean_pairwise", a, 2);
  require_rank("squared_euclidean_pairwise", b, 2);
  if (a.shape()[1] != b.shape()[1]) {
    shape_error("squared_euclidean_pairwise", a.shape(), b.shape());
  }
  require_finite("squared_euclidean_pairwise", a);
  require_finite("squared_euclidean_pairwise", b);
  const std::size_t n = a.shape()[0], m = b.shape()[0], d = a.shape()[1];
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const T* ai = a.value().raw() + i * d;
    for (std::size_t j = 0; j < m; ++j) {
      const T* bj = b.value().raw() + j * d;
      T acc = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const T diff = ai[k] - bj[k];
        acc += diff * diff;
      }
      out[i * m + j] = acc;
    }
  }
  return Var<T>::from_op(std::move(out), "squared_euclidean_pairwise", {a, b},
                         [n, m, d](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const bool ga = wants(pa), gb = wants(pb);
    T* da = ga ? pa->grad_buffer().raw() : nullptr;
    T* db = gb ? pb->grad_buffer().raw() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const T* ai = pa->value.raw() + i * d;
      for (std::size_t j = 0; j < m; ++j) {
        const T* bj = pb->value.raw() + j * d;
        const T gij = T(2) * self.grad[i * m + j];
        for (std::size_t k = 0; k < d; ++k) {
          const T diff = gij * (ai[k] - bj[k]);
          if (ga) da[i * d + k] += diff;
          if (gb) db[j * d + k] -= diff;
        }
      }
    }
  });
}

template <typename T>
Var<T> dot_product_pairwise(const Var<T>& a, const Var<T>& b) {
  require_rank("dot_product_pairwise", a, 2);
  require_rank("dot_product_pairwise", b, 2);
  if (a.shape()[1] != b.shape()[1]) {
    shape_error("dot_product_pairwise", a.shape(), b.shape());
  }
  require_finite("dot_product_pairwise", a);
  require_finite("dot_product_pairwise", b);
  const std::size_t n = a.shape()[0], m = b.shape()[0], d = a.shape()[1];
  Tensor<T> out({n, m});
  view(out, n, m).noalias() = view(a.value(), n, d) * view(b.value(), m, d).transpose();
  return Var<T>::from_op(std::move(out), "dot_product_pairwise", {a, b},
                         [n, m, d](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    auto gy = view(static_cast<const Tensor<T>&>(self.grad), n, m);
    if (wants(pa)) {
      view(pa->grad_buffer(), n, d).noalias() +=
          gy * view(static_cast<const Tensor<T>&>(pb->value), m, d);
    }
    if (wants(pb)) {
      view(pb->grad_buffer(), m, d).noalias() +=
          gy.transpose() * view(static_cast<const Tensor<T>&>(pa->value), n, d);
    }
  });
}

template <typename T>
Var<T> l2_normalize(const Var<T>& x, T eps) {
  require_rank("l2_normalize", x, 2);
  require_finite("l2_normalize", x);
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  Tensor<T> out(x.shape());
  std::vector<T> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    T acc = 0;
    for (std::size_t k = 0; k < d; ++k) acc += x.value()[i * d + k] * x.value()[i * d + k];
    norms[i] = std::max(std::sqrt(acc), eps);
    for (std::size_t k = 0; k < d; ++k) out[i * d + k] = x.value()[i * d + k] / norms[i];
  }
  return Var<T>::from_op(std::move(out), "l2_normalize", {x},
                         [n, d, eps, norms = std::move(norms)](Node<T>& self) {
    auto& px = self.parents[0];
    if (!wants(px)) return;
    auto& g = px->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      const T* gy = self.grad.raw() + i * d;
      const T* y = self.value.raw() + i * d;
      if (norms[i] <= eps) {
        // Clamped branch: y = x / eps is linear in x.
        for (std::size_t k = 0; k < d; ++k) g[i * d + k] += gy[k] / eps;
        continue;
      }
      T dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += gy[k] * y[k];
      for (std::size_t k = 0; k < d; ++k) g[i * d + k] += (gy[k] - y[k] * dot) / norms[i];
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  require_finite("sum", x);
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  return Var<T>::from_op(Tensor<T>::scalar(acc), "sum", {x}, [](Node<T>& self) {
    auto& px = self.parents[0];
    if (!wants(px)) return;
    auto& g = px->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <typename T>
Var<T> diagonal(const Var<T>& x) {
  require_rank("diagonal", x, 2);
  if (x.shape()[0] != x.shape()[1]) shape_error("diagonal", x.shape(), x.shape());
  require_finite("diagonal", x);
  const std::size_t n = x.shape()[0];
  Tensor<T> out({n});
  for (std::size_t i = 0; i < n; ++i) out[i] = x.value()[i * n + i];
  return Var<T>::from_op(std::move(out), "diagonal", {x}, [n](Node<T>& self) {
    auto& px = self.parents[0];
    if (!wants(px)) return;
    auto& g = px->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) g[i * n + i] += self.grad[i];
  });
}

template <typename T>
Var<T> pick(const Var<T>& x, std::span<const std::size_t> index) {
  require_rank("pick", x, 2);
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (index.size() != n) {
    throw ContractViolation("pick: " + std::to_string(index.size()) +
                            " indices for shape " + shape_str(x.shape()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] >= m) {
      throw ContractViolation("pick: index " + std::to_string(index[i]) +
                              " out of range for shape " + shape_str(x.shape()));
    }
  }
  require_finite("pick", x);
  Tensor<T> out({n});
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t i = 0; i < n; ++i) out[i] = x.value()[i * m + idx[i]];
  return Var<T>::from_op(std::move(out), "pick", {x},
                         [m, idx = std::move(idx)](Node<T>& self) {
    auto& px = self.parents[0];
    if (!wants(px)) return;
    auto& g = px->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g[i * m + idx[i]] += self.grad[i];
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> index) {
  if (x.shape().empty() || index.empty()) {
    throw ContractViolation("gather_rows: need a batched input and at least one index");
  }
  const std::size_t n = x.shape()[0], row = x.size() / n;
  for (std::size_t i : index) {
    if (i >= n) {
      throw ContractViolation("gather_rows: index " + std::to_string(i) +
                              " out of range for shape " + shape_str(x.shape()));
    }
  }
  require_finite("gather_rows", x);
  Shape shape = x.shape();
  shape[0] = index.size();
  Tensor<T> out(shape);
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(x.value().raw() + idx[r] * row, row, out.raw() + r * row);
  }
  return Var<T>::from_op(std::move(out), "gather_rows", {x},
                         [row, idx = std::move(idx)](Node<T>& self) {
    auto& px = self.parents[0];
    if (!wants(px)) return;
    auto& g = px->grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t k = 0; k < row; ++k) g[idx[r] * row + k] += self.grad[r * row + k];
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (shape_size(shape) != x.size()) shape_error("reshape", x.shape(), shape);
  return Var<T>::from_op(x.value().reshaped(std::move(shape)), "reshape", {x},
                         [](Node<T>& self) {
    auto& px = self.parents[0];
    if (!wants(px)) return;
    auto& g = px->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormStats<T>& stats, BatchNormOptions options) {
  const auto& s = x.shape();
  if (s.size() != 2 && s.size() != 4) rank_error("batch_norm", s, 4);
  const std::size_t N = s[0], C = s[1], inner = x.size() / (N * C);
  const Shape cshape{C};
  if (gamma.shape() != cshape || beta.shape() != cshape) {
    shape_error("batch_norm", s, gamma.shape());
  }
  if (stats.running_mean.shape() != cshape || stats.running_var.shape() != cshape) {
    shape_error("batch_norm", s, stats.running_mean.shape());
  }
  require_finite("batch_norm", x);
  require_finite("batch_norm", gamma);
  require_finite("batch_norm", beta);
  const std::size_t M = N * inner;
  if (options.training && M < 2) {
    throw ContractViolation("batch_norm: training mode needs more than one value per channel, got " +
                            shape_str(s));
  }
  const T eps = static_cast<T>(options.eps);
  std::vector<T> mu(C), inv_std(C);
  if (options.training) {
    for (std::size_t c = 0; c < C; ++c) {
      T acc = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* src = x.value().raw() + (n * C + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) acc += src[i];
      }
      const T m = acc / static_cast<T>(M);
      T var = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* src = x.value().raw() + (n * C + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) var += (src[i] - m) * (src[i] - m);
      }
      const T biased = var / static_cast<T>(M);
      mu[c] = m;
      inv_std[c] = T(1) / std::sqrt(biased + eps);
      const T mom = static_cast<T>(options.momentum);
      stats.running_mean[c] = (T(1) - mom) * stats.running_mean[c] + mom * m;
      stats.running_var[c] = (T(1) - mom) * stats.running_var[c] +
                             mom * var / static_cast<T>(M - 1);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = stats.running_mean[c];
      inv_std[c] = T(1) / std::sqrt(stats.running_var[c] + eps);
    }
  }
  Tensor<T> out(s);
  Tensor<T> xhat(s);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (n * C + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const T h = (x.value()[off + i] - mu[c]) * inv_std[c];
        xhat[off + i] = h;
        out[off + i] = gamma.value()[c] * h + beta.value()[c];
      }
    }
  }
  const bool training = options.training;
  return Var<T>::from_op(
      std::move(out), "batch_norm", {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const Tensor<T>& gy = self.grad;
        std::vector<T> sum_g(C, 0), sum_gh(C, 0);
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t off = (n * C + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_g[c] += gy[off + i];
              sum_gh[c] += gy[off + i] * xhat[off + i];
            }
          }
        }
        if (wants(pg)) {
          auto& g = pg->grad_buffer();
          for (std::size_t c = 0; c < C; ++c) g[c] += sum_gh[c];
        }
        if (wants(pb)) {
          auto& g = pb->grad_buffer();
          for (std::size_t c = 0; c < C; ++c) g[c] += sum_g[c];
        }
        if (!wants(px)) return;
        auto& g = px->grad_buffer();
        const T inv_m = T(1) / static_cast<T>(M);
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t off = (n * C + c) * inner;
            const T k = pg->value[c] * inv_std[c];
            for (std::size_t i = 0; i < inner; ++i) {
              if (training) {
                g[off + i] += k * (gy[off + i] - inv_m * sum_g[c] -
                                   xhat[off + i] * inv_m * sum_gh[c]);
              } else {
                g[off + i] += k * gy[off + i];
              }
            }
          }
        }
      });
}

#define PROTOFEW_INSTANTIATE_OPS(T)                                           \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                       \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);        \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&,         \
                         Conv2dOptions);                                      \
  template Var<T> relu(const Var<T>&);                                        \
  template Var<T> tanh(const Var<T>&);                                        \
  template Var<T> global_avg_pool(const Var<T>&);                             \
  template Var<T> adaptive_avg_pool(const Var<T>&, std::size_t);              \
  template Var<T> select_position(const Var<T>&, std::size_t);                \
  template Var<T> add(const Var<T>&, const Var<T>&);                          \
  template Var<T> sub(const Var<T>&, const Var<T>&);                          \
  template Var<T> add_bias(const Var<T>&, const Var<T>&);                     \
  template Var<T> scale(const Var<T>&, T);                                    \
  template Var<T> sqrt(const Var<T>&, T);                                     \
  template Var<T> softmax(const Var<T>&, std::size_t);                        \
  template Var<T> log_sum_exp(const Var<T>&, std::size_t);                    \
  template Var<T> squared_euclidean_pairwise(const Var<T>&, const Var<T>&);   \
  template Var<T> dot_product_pairwise(const Var<T>&, const Var<T>&);         \
  template Var<T> l2_normalize(const Var<T>&, T);                             \
  template Var<T> sum(const Var<T>&);                                         \
  template Var<T> mean(const Var<T>&);                                        \
  template Var<T> diagonal(const Var<T>&);                                    \
  template Var<T> pick(const Var<T>&, std::span<const std::size_t>);          \
  template Var<T> gather_rows(const Var<T>&, std::span<const std::size_t>);   \
  template Var<T> reshape(const Var<T>&, Shape);                              \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&,     \
                             BatchNormStats<T>&, BatchNormOptions);

PROTOFEW_INSTANTIATE_OPS(float)
PROTOFEW_INSTANTIATE_OPS(double)

#undef PROTOFEW_INSTANTIATE_OPS

}  // namespace protofew::num
