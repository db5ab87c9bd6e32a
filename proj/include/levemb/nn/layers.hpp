#pragma once

// Forward/backward kernels for the layers the embedding networks use.
// Backward kernels accumulate (+=) into parameter gradients and overwrite
// input gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "levemb/errors.hpp"
#include "levemb/tensor.hpp"

namespace levemb::nn {

namespace detail {

inline void expect_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(shape));
  }
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conv1d, kernel 3, stride 1, zero padding 1.
//   x: (B, C_in, L)   w: (C_out, C_in, 3)   b: (C_out)   ->   y: (B, C_out, L)

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// (B, C, L) -> (3C, B*L) with row c*3+k holding x[n, c, l+k-1] at column n*L+l.
template <typename T>
RowMat<T> im2col3(const BasicTensor<T>& x) {
  const std::size_t batch = x.dim(0), c_in = x.dim(1), len = x.dim(2);
  if (len < 2) throw ShapeError("conv1d needs length >= 2, got " + std::to_string(len));
  const std::size_t cols = batch * len;
  RowMat<T> out = RowMat<T>::Zero(static_cast<Eigen::Index>(3 * c_in), static_cast<Eigen::Index>(cols));
  for (std::size_t ci = 0; ci < c_in; ++ci) {
    T* r0 = out.data() + (ci * 3) * cols;
    T* r1 = r0 + cols;
    T* r2 = r1 + cols;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* xr = x.ptr() + (n * c_in + ci) * len;
      const std::size_t o = n * len;
      for (std::size_t l = 0; l + 1 < len; ++l) {
        r0[o + l + 1] = xr[l];
        r2[o + l] = xr[l + 1];
      }
      std::copy_n(xr, len, r1 + o);
    }
  }
  return out;
}

}  // namespace detail

template <typename T>
BasicTensor<T> conv1d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                              const BasicTensor<T>& b) {
  detail::expect_rank(x.shape(), 3, "conv1d input");
  detail::expect_rank(w.shape(), 3, "conv1d weight");
  const std::size_t batch = x.dim(0), c_in = x.dim(1), len = x.dim(2);
  const std::size_t c_out = w.dim(0);
  if (w.dim(1) != c_in || w.dim(2) != 3 || b.size() != c_out) {
    throw ShapeError("conv1d: weight " + shape_string(w.shape()) + " / bias " +
                     shape_string(b.shape()) + " do not fit input " + shape_string(x.shape()));
  }
  using Idx = Eigen::Index;
  const detail::RowMat<T> cols = detail::im2col3(x);
  detail::ConstMatMap<T> wm(w.ptr(), static_cast<Idx>(c_out), static_cast<Idx>(3 * c_in));
  detail::RowMat<T> ym = wm * cols;
  BasicTensor<T> y({batch, c_out, len});
  const std::size_t width = batch * len;
  for (std::size_t co = 0; co < c_out; ++co) {
    const T* src = ym.data() + co * width;
    for (std::size_t n = 0; n < batch; ++n) {
      T* dst = y.ptr() + (n * c_out + co) * len;
      const T* s = src + n * len;
      const T bias = b[co];
#pragma omp simd
      for (std::size_t l = 0; l < len; ++l) dst[l] = s[l] + bias;
    }
  }
  return y;
}

template <typename T>
void conv1d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy,
                     BasicTensor<T>* dx, BasicTensor<T>& dw, BasicTensor<T>& db) {
  const std::size_t batch = x.dim(0), c_in = x.dim(1), len = x.dim(2);
  const std::size_t c_out = w.dim(0);
  if (dy.shape() != Shape{batch, c_out, len} || dw.shape() != w.shape() || db.size() != c_out) {
    throw ShapeError("conv1d backward: gradient shapes do not match forward shapes");
  }
  using Idx = Eigen::Index;
  const std::size_t width = batch * len;
  detail::RowMat<T> g(static_cast<Idx>(c_out), static_cast<Idx>(width));
  for (std::size_t co = 0; co < c_out; ++co) {
    for (std::size_t n = 0; n < batch; ++n) {
      const T* s = dy.ptr() + (n * c_out + co) * len;
      std::copy(s, s + len, g.data() + co * width + n * len);
    }
  }
  for (std::size_t co = 0; co < c_out; ++co) db[co] += g.row(static_cast<Idx>(co)).sum();
  const detail::RowMat<T> cols = detail::im2col3(x);
  detail::MatMap<T> dwm(dw.ptr(), static_cast<Idx>(c_out), static_cast<Idx>(3 * c_in));
  dwm.noalias() += g * cols.transpose();
  if (!dx) return;
  detail::ConstMatMap<T> wm(w.ptr(), static_cast<Idx>(c_out), static_cast<Idx>(3 * c_in));
  const detail::RowMat<T> dcols = wm.transpose() * g;
  *dx = BasicTensor<T>(x.shape());
  for (std::size_t ci = 0; ci < c_in; ++ci) {
    const T* r0 = dcols.data() + (ci * 3) * width;
    const T* r1 = r0 + width;
    const T* r2 = r1 + width;
    for (std::size_t n = 0; n < batch; ++n) {
      T* d = dx->ptr() + (n * c_in + ci) * len;
      const std::size_t o = n * len;
      // x[p] feeds column l = p+1 through tap 0 and l = p-1 through tap 2.
#pragma omp simd
      for (std::size_t p = 0; p < len; ++p) d[p] = r1[o + p];
      for (std::size_t p = 0; p + 1 < len; ++p) d[p] += r0[o + p + 1];
      for (std::size_t p = 1; p < len; ++p) d[p] += r2[o + p - 1];
    }
  }
}

// ---------------------------------------------------------------------------
// Average pooling, window 2, stride 2. An odd trailing element is dropped.

template <typename T>
BasicTensor<T> avgpool1d_forward(const BasicTensor<T>& x) {
  detail::expect_rank(x.shape(), 3, "avgpool1d input");
  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
  if (len < 2) throw ShapeError("avgpool1d needs length >= 2, got " + std::to_string(len));
  const std::size_t out_len = len / 2;
  BasicTensor<T> y({x.dim(0), x.dim(1), out_len});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * len;
    T* yr = y.ptr() + r * out_len;
    for (std::size_t l = 0; l < out_len; ++l) yr[l] = T(0.5) * (xr[2 * l] + xr[2 * l + 1]);
  }
  return y;
}

template <typename T>
BasicTensor<T> avgpool1d_backward(const Shape& input_shape, const BasicTensor<T>& dy) {
  const std::size_t rows = input_shape[0] * input_shape[1], len = input_shape[2];
  const std::size_t out_len = len / 2;
  if (dy.shape() != Shape{input_shape[0], input_shape[1], out_len}) {
    throw ShapeError("avgpool1d backward: gradient shape mismatch");
  }
  BasicTensor<T> dx(input_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* g = dy.ptr() + r * out_len;
    T* dxr = dx.ptr() + r * len;
    for (std::size_t l = 0; l < out_len; ++l) {
      dxr[2 * l] = T(0.5) * g[l];
      dxr[2 * l + 1] = T(0.5) * g[l];
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ReLU

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (T& v : y.data()) v = v > T{0} ? v : T{0};
  return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  if (x.shape() != dy.shape()) throw ShapeError("relu backward: gradient shape mismatch");
  BasicTensor<T> dx = dy;
  const T* xp = x.ptr();
  T* dp = dx.ptr();
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(xp[i] > T{0})) dp[i] = T{0};
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Fully connected: x (B, In), w (Out, In), b (Out) -> (B, Out)

template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                              const BasicTensor<T>& b) {
  detail::expect_rank(x.shape(), 2, "linear input");
  detail::expect_rank(w.shape(), 2, "linear weight");
  const std::size_t batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in || b.size() != out) {
    throw ShapeError("linear: weight " + shape_string(w.shape()) + " does not fit input " +
                     shape_string(x.shape()));
  }
  using Idx = Eigen::Index;
  BasicTensor<T> y({batch, out});
  detail::ConstMatMap<T> xm(x.ptr(), static_cast<Idx>(batch), static_cast<Idx>(in));
  detail::ConstMatMap<T> wm(w.ptr(), static_cast<Idx>(out), static_cast<Idx>(in));
  detail::MatMap<T> ym(y.ptr(), static_cast<Idx>(batch), static_cast<Idx>(out));
  ym.noalias() = xm * wm.transpose();
  for (std::size_t n = 0; n < batch; ++n) detail::axpy(T{1}, b.ptr(), y.ptr() + n * out, out);
  return y;
}

template <typename T>
void linear_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy,
                     BasicTensor<T>* dx, BasicTensor<T>& dw, BasicTensor<T>& db) {
  const std::size_t batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (dy.shape() != Shape{batch, out} || dw.shape() != w.shape() || db.size() != out) {
    throw ShapeError("linear backward: gradient shapes do not match forward shapes");
  }
  using Idx = Eigen::Index;
  detail::ConstMatMap<T> xm(x.ptr(), static_cast<Idx>(batch), static_cast<Idx>(in));
  detail::ConstMatMap<T> wm(w.ptr(), static_cast<Idx>(out), static_cast<Idx>(in));
  detail::ConstMatMap<T> gm(dy.ptr(), static_cast<Idx>(batch), static_cast<Idx>(out));
  detail::MatMap<T> dwm(dw.ptr(), static_cast<Idx>(out), static_cast<Idx>(in));
  dwm.noalias() += gm.transpose() * xm;
  for (std::size_t n = 0; n < batch; ++n) detail::axpy(T{1}, dy.ptr() + n * out, db.ptr(), out);
  if (!dx) return;
  *dx = BasicTensor<T>(x.shape());
  detail::MatMap<T> dxm(dx->ptr(), static_cast<Idx>(batch), static_cast<Idx>(in));
  dxm.noalias() = gm * wm;
}

}  // namespace levemb::nn
