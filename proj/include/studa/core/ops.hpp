#pragma once

// Differentiable tensor operations. Each op computes its forward value and,
// when grad mode is on and an input requires grad, records a backward closure.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "studa/core/autograd.hpp"

namespace studa::ops {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using CMatMap = Eigen::Map<const RowMat<T>>;

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

inline int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// Output columns ow with 0 <= ow*stride - pad + kj < W.
inline void valid_cols(int W, int Wo, int stride, int pad, int kj, int& lo, int& hi) {
  const int off = kj - pad;
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  hi = (W - 1 - off) >= 0 ? std::min(Wo, (W - 1 - off) / stride + 1) : 0;
  if (hi < lo) hi = lo;
}

// col: [C*k*k, Ho*Wo]
template <class T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* col) {
  const int HWo = Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * HWo;
        const T* xc = x + static_cast<std::size_t>(c) * H * W;
        int lo, hi;
        valid_cols(W, Wo, stride, pad, kj, lo, hi);
        const int off = kj - pad;
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih = oh * stride - pad + ki;
          T* r = row + oh * Wo;
          if (ih < 0 || ih >= H) {
            std::fill(r, r + Wo, T(0));
            continue;
          }
          const T* xr = xc + ih * W;
          std::fill(r, r + lo, T(0));
          if (stride == 1) {
            std::copy(xr + lo + off, xr + hi + off, r + lo);
          } else {
            for (int ow = lo; ow < hi; ++ow) r[ow] = xr[ow * stride + off];
          }
          std::fill(r + hi, r + Wo, T(0));
        }
      }
}

template <class T>
void col2im(const T* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* dx) {
  const int HWo = Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * HWo;
        T* xc = dx + static_cast<std::size_t>(c) * H * W;
        int lo, hi;
        valid_cols(W, Wo, stride, pad, kj, lo, hi);
        const int off = kj - pad;
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          const T* __restrict r = row + oh * Wo;
          T* __restrict xr = xc + ih * W;
          if (stride == 1) {
            for (int ow = lo; ow < hi; ++ow) xr[ow + off] += r[ow];
          } else {
            for (int ow = lo; ow < hi; ++ow) xr[ow * stride + off] += r[ow];
          }
        }
      }
}

}  // namespace detail

// x [N,Ci,H,W], w [Co,Ci,k,k], b [Co] (may be undefined) -> [N,Co,Ho,Wo]
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride = 1, int pad = 0) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  detail::require(xs.size() == 4 && ws.size() == 4 && ws[1] == xs[1] && ws[2] == ws[3], "conv2d operand shapes");
  const int N = xs[0], Ci = xs[1], H = xs[2], W = xs[3], Co = ws[0], k = ws[2];
  const int Ho = detail::conv_out(H, k, stride, pad), Wo = detail::conv_out(W, k, stride, pad);
  detail::require(Ho > 0 && Wo > 0, "conv2d output would be empty");
  const int K = Ci * k * k, HWo = Ho * Wo;
  Tensor<T> y(Shape{N, Co, Ho, Wo});
  std::vector<T> col(static_cast<std::size_t>(K) * HWo);
  CMatMap<T> Wm(w.value().data(), Co, K);
  for (int n = 0; n < N; ++n) {
    detail::im2col(x.value().data() + static_cast<std::size_t>(n) * Ci * H * W, Ci, H, W, k, stride, pad, Ho, Wo,
                   col.data());
    MatMap<T> Y(y.data() + static_cast<std::size_t>(n) * Co * HWo, Co, HWo);
    Y.noalias() = Wm * CMatMap<T>(col.data(), K, HWo);
    if (b.defined())
      for (int c = 0; c < Co; ++c) Y.row(c).array() += b.value()[c];
  }
  std::vector<Var<T>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_op<T>(std::move(y), parents, [x, w, b, stride, pad, N, Ci, H, W, Co, k, Ho, Wo, K, HWo](auto& self) {
    std::vector<T> col(static_cast<std::size_t>(K) * HWo), dcol(static_cast<std::size_t>(K) * HWo);
    CMatMap<T> Wm(w.value().data(), Co, K);
    for (int n = 0; n < N; ++n) {
      CMatMap<T> dY(self.grad.data() + static_cast<std::size_t>(n) * Co * HWo, Co, HWo);
      if (w.requires_grad()) {
        detail::im2col(x.value().data() + static_cast<std::size_t>(n) * Ci * H * W, Ci, H, W, k, stride, pad, Ho,
                       Wo, col.data());
        MatMap<T> dW(w.node()->grad_buffer().data(), Co, K);
        dW.noalias() += dY * CMatMap<T>(col.data(), K, HWo).transpose();
      }
      if (b.defined() && b.requires_grad()) {
        T* db = b.node()->grad_buffer().data();
        for (int c = 0; c < Co; ++c) db[c] += dY.row(c).sum();
      }
      if (x.requires_grad()) {
        MatMap<T> dC(dcol.data(), K, HWo);
        dC.noalias() = Wm.transpose() * dY;
        detail::col2im(dcol.data(), Ci, H, W, k, stride, pad, Ho, Wo,
                       x.node()->grad_buffer().data() + static_cast<std::size_t>(n) * Ci * H * W);
      }
    }
  });
}

// x [N,F], w [O,F], b [O] -> [N,O]
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  detail::require(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[1], "linear operand shapes");
  const int N = xs[0], F = xs[1], O = ws[0];
  Tensor<T> y(Shape{N, O});
  MatMap<T> Y(y.data(), N, O);
  Y.noalias() = CMatMap<T>(x.value().data(), N, F) * CMatMap<T>(w.value().data(), O, F).transpose();
  if (b.defined())
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < O; ++o) Y(n, o) += b.value()[o];
  std::vector<Var<T>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_op<T>(std::move(y), parents, [x, w, b, N, F, O](auto& self) {
    CMatMap<T> dY(self.grad.data(), N, O);
    if (w.requires_grad())
      MatMap<T>(w.node()->grad_buffer().data(), O, F).noalias() += dY.transpose() * CMatMap<T>(x.value().data(), N, F);
    if (b.defined() && b.requires_grad()) {
      T* db = b.node()->grad_buffer().data();
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o) db[o] += dY(n, o);
    }
    if (x.requires_grad())
      MatMap<T>(x.node()->grad_buffer().data(), N, F).noalias() += dY * CMatMap<T>(w.value().data(), O, F);
  });
}

namespace detail {

template <class T, class Fwd, class Deriv>
Var<T> unary(const Var<T>& x, Fwd fwd, Deriv deriv) {
  Tensor<T> y(x.shape());
  const std::size_t n = y.size();
  const T* __restrict xv = x.value().data();
  T* __restrict yv = y.data();
  for (std::size_t i = 0; i < n; ++i) yv[i] = fwd(xv[i]);
  return make_op<T>(std::move(y), {x}, [x, deriv](auto& self) {
    const std::size_t n = self.value.size();
    T* __restrict dx = x.node()->grad_buffer().data();
    const T* __restrict xv = x.value().data();
    const T* __restrict yv = self.value.data();
    const T* __restrict dy = self.grad.data();
    for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace detail

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return detail::unary(
      x, [slope](T v) { return std::max(v, T(0)) + slope * std::min(v, T(0)); },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return leaky_relu(x, T(0));
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> scale(const Var<T>& x, T s) {
  return detail::unary(
      x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <class T>
Var<T> add_scalar(const Var<T>& x, T s) {
  return detail::unary(
      x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

// Elementwise a + alpha * b (same shapes).
template <class T>
Var<T> axpy(const Var<T>& a, const Var<T>& b, T alpha) {
  detail::require(a.shape() == b.shape(), "elementwise operand shapes differ");
  Tensor<T> y = a.value();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * bv[i];
  return make_op<T>(std::move(y), {a, b}, [a, b, alpha](auto& self) {
    const T* dy = self.grad.data();
    if (a.requires_grad()) {
      T* da = a.node()->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += dy[i];
    }
    if (b.requires_grad()) {
      T* db = b.node()->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) db[i] += alpha * dy[i];
    }
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return axpy(a, b, T(1));
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return axpy(a, b, T(-1));
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape s) {
  Tensor<T> y = x.value().reshaped(std::move(s));
  return make_op<T>(std::move(y), {x}, [x](auto& self) {
    T* dx = x.node()->grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
  });
}

// Concatenate two NCHW tensors along channels.
template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  detail::require(as.size() == 4 && bs.size() == 4 && as[0] == bs[0] && as[2] == bs[2] && as[3] == bs[3],
                  "concat_channels operand shapes");
  const int N = as[0], Ca = as[1], Cb = bs[1], HW = as[2] * as[3];
  Tensor<T> y(Shape{N, Ca + Cb, as[2], as[3]});
  for (int n = 0; n < N; ++n) {
    std::copy_n(a.value().data() + static_cast<std::size_t>(n) * Ca * HW, Ca * HW,
                y.data() + static_cast<std::size_t>(n) * (Ca + Cb) * HW);
    std::copy_n(b.value().data() + static_cast<std::size_t>(n) * Cb * HW, Cb * HW,
                y.data() + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * HW);
  }
  return make_op<T>(std::move(y), {a, b}, [a, b, N, Ca, Cb, HW](auto& self) {
    for (int n = 0; n < N; ++n) {
      const T* g = self.grad.data() + static_cast<std::size_t>(n) * (Ca + Cb) * HW;
      if (a.requires_grad()) {
        T* da = a.node()->grad_buffer().data() + static_cast<std::size_t>(n) * Ca * HW;
        for (int i = 0; i < Ca * HW; ++i) da[i] += g[i];
      }
      if (b.requires_grad()) {
        T* db = b.node()->grad_buffer().data() + static_cast<std::size_t>(n) * Cb * HW;
        for (int i = 0; i < Cb * HW; ++i) db[i] += g[Ca * HW + i];
      }
    }
  });
}

template <class T>
Var<T> upsample_nearest(const Var<T>& x, int factor) {
  const auto& s = x.shape();
  detail::require(s.size() == 4 && factor >= 1, "upsample_nearest expects NCHW");
  const int NC = s[0] * s[1], H = s[2], W = s[3], Ho = H * factor, Wo = W * factor;
  Tensor<T> y(Shape{s[0], s[1], Ho, Wo});
  for (int p = 0; p < NC; ++p) {
    const T* xp = x.value().data() + static_cast<std::size_t>(p) * H * W;
    T* yp = y.data() + static_cast<std::size_t>(p) * Ho * Wo;
    for (int i = 0; i < H; ++i) {
      T* row = yp + static_cast<std::size_t>(i) * factor * Wo;
      for (int j = 0; j < W; ++j)
        for (int f = 0; f < factor; ++f) row[j * factor + f] = xp[i * W + j];
      for (int f = 1; f < factor; ++f) std::copy_n(row, Wo, row + f * Wo);
    }
  }
  return make_op<T>(std::move(y), {x}, [x, NC, H, W, Wo, factor](auto& self) {
    T* dx = x.node()->grad_buffer().data();
    for (int p = 0; p < NC; ++p) {
      const T* g = self.grad.data() + static_cast<std::size_t>(p) * H * factor * Wo;
      T* d = dx + static_cast<std::size_t>(p) * H * W;
      for (int i = 0; i < H; ++i)
        for (int f = 0; f < factor; ++f) {
          const T* gr = g + (static_cast<std::size_t>(i) * factor + f) * Wo;
          for (int j = 0; j < W; ++j) {
            T acc = 0;
            for (int e = 0; e < factor; ++e) acc += gr[j * factor + e];
            d[i * W + j] += acc;
          }
        }
    }
  });
}

// [N,C,H,W] -> [N,C]
template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  const auto& s = x.shape();
  detail::require(s.size() == 4, "global_avg_pool expects NCHW");
  const int NC = s[0] * s[1], HW = s[2] * s[3];
  Tensor<T> y(Shape{s[0], s[1]});
  for (int p = 0; p < NC; ++p) {
    const T* xp = x.value().data() + static_cast<std::size_t>(p) * HW;
    T acc = 0;
    for (int i = 0; i < HW; ++i) acc += xp[i];
    y[p] = acc / T(HW);
  }
  return make_op<T>(std::move(y), {x}, [x, NC, HW](auto& self) {
    T* dx = x.node()->grad_buffer().data();
    for (int p = 0; p < NC; ++p) {
      const T g = self.grad[p] / T(HW);
      for (int i = 0; i < HW; ++i) dx[static_cast<std::size_t>(p) * HW + i] += g;
    }
  });
}

// Per-sample, per-channel normalization over spatial dims (no affine).
template <class T>
Var<T> instance_norm(const Var<T>& x, T eps = T(1e-5)) {
  const auto& s = x.shape();
  detail::require(s.size() == 4, "instance_norm expects NCHW");
  const int NC = s[0] * s[1], M = s[2] * s[3];
  Tensor<T> y(s);
  std::vector<T> inv_std(NC);
  for (int p = 0; p < NC; ++p) {
    const T* xp = x.value().data() + static_cast<std::size_t>(p) * M;
    T mean = 0;
    for (int i = 0; i < M; ++i) mean += xp[i];
    mean /= T(M);
    T var = 0;
    for (int i = 0; i < M; ++i) var += (xp[i] - mean) * (xp[i] - mean);
    var /= T(M);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[p] = is;
    T* yp = y.data() + static_cast<std::size_t>(p) * M;
    for (int i = 0; i < M; ++i) yp[i] = (xp[i] - mean) * is;
  }
  return make_op<T>(std::move(y), {x}, [x, NC, M, inv_std = std::move(inv_std)](auto& self) {
    T* dx = x.node()->grad_buffer().data();
    for (int p = 0; p < NC; ++p) {
      const T* g = self.grad.data() + static_cast<std::size_t>(p) * M;
      const T* yh = self.value.data() + static_cast<std::size_t>(p) * M;
      T mg = 0, mgy = 0;
      for (int i = 0; i < M; ++i) {
        mg += g[i];
        mgy += g[i] * yh[i];
      }
      mg /= T(M);
      mgy /= T(M);
      T* d = dx + static_cast<std::size_t>(p) * M;
      for (int i = 0; i < M; ++i) d[i] += inv_std[p] * (g[i] - mg - yh[i] * mgy);
    }
  });
}

// y[n,c,:,:] = x[n,c,:,:] * gamma[n,c] + beta[n,c]; gamma/beta are [N,C].
template <class T>
Var<T> channel_affine(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta) {
  const auto& s = x.shape();
  detail::require(s.size() == 4 && gamma.shape() == Shape({s[0], s[1]}) && beta.shape() == Shape({s[0], s[1]}),
                  "channel_affine operand shapes");
  const int NC = s[0] * s[1], M = s[2] * s[3];
  Tensor<T> y(s);
  for (int p = 0; p < NC; ++p) {
    const T* xp = x.value().data() + static_cast<std::size_t>(p) * M;
    T* yp = y.data() + static_cast<std::size_t>(p) * M;
    const T g = gamma.value()[p], b = beta.value()[p];
    for (int i = 0; i < M; ++i) yp[i] = xp[i] * g + b;
  }
  return make_op<T>(std::move(y), {x, gamma, beta}, [x, gamma, beta, NC, M](auto& self) {
    for (int p = 0; p < NC; ++p) {
      const T* g = self.grad.data() + static_cast<std::size_t>(p) * M;
      const T* xp = x.value().data() + static_cast<std::size_t>(p) * M;
      if (x.requires_grad()) {
        T* d = x.node()->grad_buffer().data() + static_cast<std::size_t>(p) * M;
        const T gm = gamma.value()[p];
        for (int i = 0; i < M; ++i) d[i] += g[i] * gm;
      }
      if (gamma.requires_grad()) {
        T acc = 0;
        for (int i = 0; i < M; ++i) acc += g[i] * xp[i];
        gamma.node()->grad_buffer()[p] += acc;
      }
      if (beta.requires_grad()) {
        T acc = 0;
        for (int i = 0; i < M; ++i) acc += g[i];
        beta.node()->grad_buffer()[p] += acc;
      }
    }
  });
}

// Columns [begin, end) of a [N, F] tensor.
template <class T>
Var<T> slice_columns(const Var<T>& x, int begin, int end) {
  const auto& s = x.shape();
  detail::require(s.size() == 2 && begin >= 0 && end <= s[1] && begin < end, "slice_columns range");
  const int N = s[0], F = s[1], O = end - begin;
  Tensor<T> y(Shape{N, O});
  for (int n = 0; n < N; ++n)
    for (int j = 0; j < O; ++j) y[n * O + j] = x.value()[n * F + begin + j];
  return make_op<T>(std::move(y), {x}, [x, N, F, O, begin](auto& self) {
    T* dx = x.node()->grad_buffer().data();
    for (int n = 0; n < N; ++n)
      for (int j = 0; j < O; ++j) dx[n * F + begin + j] += self.grad[n * O + j];
  });
}

// Log-softmax over the channel dimension of NCHW.
template <class T>
Var<T> log_softmax_channels(const Var<T>& x) {
  const auto& s = x.shape();
  detail::require(s.size() == 4, "log_softmax_channels expects NCHW");
  const int N = s[0], C = s[1], HW = s[2] * s[3];
  Tensor<T> y(s);
  for (int n = 0; n < N; ++n) {
    const T* xp = x.value().data() + static_cast<std::size_t>(n) * C * HW;
    T* yp = y.data() + static_cast<std::size_t>(n) * C * HW;
    for (int i = 0; i < HW; ++i) {
      T m = xp[i];
      for (int c = 1; c < C; ++c) m = std::max(m, xp[c * HW + i]);
      T z = 0;
      for (int c = 0; c < C; ++c) z += std::exp(xp[c * HW + i] - m);
      const T lz = m + std::log(z);
      for (int c = 0; c < C; ++c) yp[c * HW + i] = xp[c * HW + i] - lz;
    }
  }
  return make_op<T>(std::move(y), {x}, [x, N, C, HW](auto& self) {
    for (int n = 0; n < N; ++n) {
      const T* g = self.grad.data() + static_cast<std::size_t>(n) * C * HW;
      const T* yp = self.value.data() + static_cast<std::size_t>(n) * C * HW;
      T* d = x.node()->grad_buffer().data() + static_cast<std::size_t>(n) * C * HW;
      for (int i = 0; i < HW; ++i) {
        T gs = 0;
        for (int c = 0; c < C; ++c) gs += g[c * HW + i];
        for (int c = 0; c < C; ++c) d[c * HW + i] += g[c * HW + i] - std::exp(yp[c * HW + i]) * gs;
      }
    }
  });
}

// exp, elementwise; used to turn log-probabilities into probabilities.
template <class T>
Var<T> exp(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

// Weighted self-information from log-probabilities: -exp(l) * l, which is
// -p log p with the 0 log 0 = 0 convention built in.
template <class T>
Var<T> self_information_from_log(const Var<T>& logp) {
  return detail::unary(
      logp, [](T l) { return -std::exp(l) * l; }, [](T l, T) { return -std::exp(l) * (l + T(1)); });
}

// Mean over non-ignored pixels of -logp[label]. labels has N*H*W entries.
// When every pixel is ignored the loss is 0; `all_ignored` reports that.
template <class T>
Var<T> nll_loss(const Var<T>& logp, std::span<const std::uint8_t> labels, std::uint8_t ignore_index = 255,
                bool* all_ignored = nullptr) {
  const auto& s = logp.shape();
  detail::require(s.size() == 4, "nll_loss expects NCHW log-probabilities");
  const int N = s[0], C = s[1], HW = s[2] * s[3];
  detail::require(labels.size() == static_cast<std::size_t>(N) * HW, "nll_loss label count");
  std::size_t count = 0;
  T acc = 0;
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < HW; ++i) {
      const std::uint8_t l = labels[static_cast<std::size_t>(n) * HW + i];
      if (l == ignore_index) continue;
      if (l >= C) throw Error("label " + std::to_string(l) + " out of range for " + std::to_string(C) + " classes");
      acc -= logp.value()[(static_cast<std::size_t>(n) * C + l) * HW + i];
      ++count;
    }
  if (all_ignored) *all_ignored = (count == 0);
  const T value = count ? acc / T(count) : T(0);
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  return make_op<T>(Tensor<T>::scalar(value), {logp},
                    [logp, lab = std::move(lab), N, C, HW, count, ignore_index](auto& self) {
                      if (!count) return;
                      T* d = logp.node()->grad_buffer().data();
                      const T g = self.grad[0] / T(count);
                      for (int n = 0; n < N; ++n)
                        for (int i = 0; i < HW; ++i) {
                          const std::uint8_t l = lab[static_cast<std::size_t>(n) * HW + i];
                          if (l != ignore_index) d[(static_cast<std::size_t>(n) * C + l) * HW + i] -= g;
                        }
                    });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x.value()[i];
  return make_op<T>(Tensor<T>::scalar(acc / T(n)), {x}, [x, n](auto& self) {
    T* d = x.node()->grad_buffer().data();
    const T g = self.grad[0] / T(n);
    for (std::size_t i = 0; i < n; ++i) d[i] += g;
  });
}

// mean |a - b|
template <class T>
Var<T> l1_loss(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "l1_loss operand shapes");
  const std::size_t n = a.value().size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a.value()[i] - b.value()[i]);
  return make_op<T>(Tensor<T>::scalar(acc / T(n)), {a, b}, [a, b, n](auto& self) {
    const T g = self.grad[0] / T(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T diff = a.value()[i] - b.value()[i];
      const T sg = diff > T(0) ? g : (diff < T(0) ? -g : T(0));
      if (a.requires_grad()) a.node()->grad_buffer()[i] += sg;
      if (b.requires_grad()) b.node()->grad_buffer()[i] -= sg;
    }
  });
}

// Batch mean of the per-sample root-mean-square distance,
// sqrt(mean_i (a_i - b_i)^2): the L2 norm of the difference normalized by
// sqrt of the per-sample element count.
template <class T>
Var<T> rms_distance(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape() && a.shape().size() >= 2, "rms_distance operand shapes");
  const int N = a.shape()[0];
  const std::size_t per = a.value().size() / N;
  std::vector<T> norms(N);
  T acc = 0;
  for (int n = 0; n < N; ++n) {
    T ss = 0;
    for (std::size_t i = 0; i < per; ++i) {
      const T d = a.value()[n * per + i] - b.value()[n * per + i];
      ss += d * d;
    }
    norms[n] = std::sqrt(ss / T(per) + std::numeric_limits<T>::min());
    acc += norms[n];
  }
  return make_op<T>(Tensor<T>::scalar(acc / T(N)), {a, b}, [a, b, N, per, norms = std::move(norms)](auto& self) {
    for (int n = 0; n < N; ++n) {
      const T g = self.grad[0] / (T(N) * T(per) * norms[n]);
      for (std::size_t i = 0; i < per; ++i) {
        const T d = (a.value()[n * per + i] - b.value()[n * per + i]) * g;
        if (a.requires_grad()) a.node()->grad_buffer()[n * per + i] += d;
        if (b.requires_grad()) b.node()->grad_buffer()[n * per + i] -= d;
      }
    }
  });
}

// mean (x - target)^2 against a constant target.
template <class T>
Var<T> mse_to_constant(const Var<T>& x, T target) {
  const std::size_t n = x.value().size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += (x.value()[i] - target) * (x.value()[i] - target);
  return make_op<T>(Tensor<T>::scalar(acc / T(n)), {x}, [x, n, target](auto& self) {
    T* d = x.node()->grad_buffer().data();
    const T g = T(2) * self.grad[0] / T(n);
    for (std::size_t i = 0; i < n; ++i) d[i] += g * (x.value()[i] - target);
  });
}

inline constexpr double kLogitClip = 30.0;

// Mean binary cross-entropy on logits against a constant label in {0, 1}.
// Logits are clipped to +-30; the clip passes no gradient.
template <class T>
Var<T> bce_with_logits(const Var<T>& logits, T label) {
  const std::size_t n = logits.value().size();
  const T clip = T(kLogitClip);
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T z = std::clamp(logits.value()[i], -clip, clip);
    acc += std::max(z, T(0)) - z * label + std::log1p(std::exp(-std::abs(z)));
  }
  return make_op<T>(Tensor<T>::scalar(acc / T(n)), {logits}, [logits, n, label, clip](auto& self) {
    T* d = logits.node()->grad_buffer().data();
    const T g = self.grad[0] / T(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T raw = logits.value()[i];
      if (raw > clip || raw < -clip) continue;
      const T sig = T(1) / (T(1) + std::exp(-raw));
      d[i] += g * (sig - label);
    }
  });
}

// Sum of weighted scalar terms.
template <class T>
Var<T> weighted_sum(const std::vector<std::pair<T, Var<T>>>& terms) {
  T acc = 0;
  std::vector<Var<T>> parents;
  std::vector<T> weights;
  for (const auto& [w, v] : terms) {
    acc += w * v.item();
    parents.push_back(v);
    weights.push_back(w);
  }
  return make_op<T>(Tensor<T>::scalar(acc), parents, [parents, weights](auto& self) {
    for (std::size_t i = 0; i < parents.size(); ++i)
      if (parents[i].requires_grad()) parents[i].node()->grad_buffer()[0] += weights[i] * self.grad[0];
  });
}

}  // namespace studa::ops
