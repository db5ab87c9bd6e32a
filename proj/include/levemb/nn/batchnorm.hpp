#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "levemb/errors.hpp"
#include "levemb/tensor.hpp"

namespace levemb::nn {

enum class Mode {
  kTrain,       // batch statistics, running statistics updated
  kEval,        // running statistics
  kBatchStats,  // batch statistics, running statistics left untouched
};

template <typename T>
struct BatchNormState {
  Parameter<T> gamma;
  Parameter<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  double eps = 1e-9;
  double momentum = 0.1;

  BatchNormState() = default;
  BatchNormState(const std::string& prefix, std::size_t features, double epsilon = 1e-9,
                 double mom = 0.1)
      : gamma(prefix + ".gamma", {features}),
        beta(prefix + ".beta", {features}),
        running_mean({features}),
        running_var({features}, T{1}),
        eps(epsilon),
        momentum(mom) {
    gamma.value.fill(T{1});
    validate();
  }

  std::size_t features() const { return gamma.size(); }

  void validate() const {
    if (!(eps > 0.0)) throw UsageError("batch norm eps must be positive");
    if (!(momentum > 0.0 && momentum < 1.0)) throw UsageError("batch norm momentum must lie in (0,1)");
  }
};

template <typename T>
struct BatchNormCache {
  BasicTensor<T> xhat;
  BasicTensor<T> inv_std;  // per feature
  Mode mode = Mode::kEval;
};

// x: (B, F). Normalization uses 1/sqrt(var + eps) with the biased batch
// variance; the running variance tracks the unbiased estimate.
template <typename T>
BasicTensor<T> batchnorm1d_forward(const BasicTensor<T>& x, BatchNormState<T>& state, Mode mode,
                                   BatchNormCache<T>* cache = nullptr) {
  if (x.rank() != 2 || x.dim(1) != state.features()) {
    throw ShapeError("batchnorm1d: input " + shape_string(x.shape()) + " does not match " +
                     std::to_string(state.features()) + " features");
  }
  const std::size_t batch = x.dim(0), feat = x.dim(1);
  const bool batch_stats = mode != Mode::kEval;
  if (batch_stats && batch < 2) {
    throw ShapeError("batchnorm1d: batch statistics need at least 2 samples");
  }
  BasicTensor<T> mean({feat}), inv_std({feat});
  if (batch_stats) {
    for (std::size_t f = 0; f < feat; ++f) {
      double m = 0.0;
      for (std::size_t n = 0; n < batch; ++n) m += x[n * feat + f];
      m /= static_cast<double>(batch);
      double v = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const double c = x[n * feat + f] - m;
        v += c * c;
      }
      v /= static_cast<double>(batch);
      mean[f] = static_cast<T>(m);
      inv_std[f] = static_cast<T>(1.0 / std::sqrt(v + state.eps));
      if (mode == Mode::kTrain) {
        const double unbiased = v * static_cast<double>(batch) / static_cast<double>(batch - 1);
        state.running_mean[f] = static_cast<T>((1.0 - state.momentum) * state.running_mean[f] +
                                               state.momentum * m);
        state.running_var[f] = static_cast<T>((1.0 - state.momentum) * state.running_var[f] +
                                              state.momentum * unbiased);
      }
    }
  } else {
    for (std::size_t f = 0; f < feat; ++f) {
      mean[f] = state.running_mean[f];
      inv_std[f] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[f]) + state.eps));
    }
  }

  BasicTensor<T> xhat(x.shape()), y(x.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t f = 0; f < feat; ++f) {
      const std::size_t i = n * feat + f;
      xhat[i] = (x[i] - mean[f]) * inv_std[f];
      y[i] = state.gamma.value[f] * xhat[i] + state.beta.value[f];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return y;
}

// Accumulates gamma/beta gradients into `state`, returns dL/dx.
template <typename T>
BasicTensor<T> batchnorm1d_backward(const BasicTensor<T>& dy, const BatchNormCache<T>& cache,
                                    BatchNormState<T>& state) {
  if (dy.shape() != cache.xhat.shape()) throw ShapeError("batchnorm1d backward: shape mismatch");
  const std::size_t batch = dy.dim(0), feat = dy.dim(1);
  BasicTensor<T> dx(dy.shape());
  for (std::size_t f = 0; f < feat; ++f) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t i = n * feat + f;
      sum_dy += dy[i];
      sum_dy_xhat += static_cast<double>(dy[i]) * cache.xhat[i];
    }
    state.gamma.grad[f] += static_cast<T>(sum_dy_xhat);
    state.beta.grad[f] += static_cast<T>(sum_dy);
    const double g = state.gamma.value[f];
    const double inv_std = cache.inv_std[f];
    if (cache.mode == Mode::kEval) {
      for (std::size_t n = 0; n < batch; ++n) {
        dx[n * feat + f] = static_cast<T>(g * inv_std * dy[n * feat + f]);
      }
      continue;
    }
    // dx = gamma * inv_std / B * (B dy - sum(dy) - xhat * sum(dy * xhat))
    const double b = static_cast<double>(batch);
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t i = n * feat + f;
      dx[i] = static_cast<T>(g * inv_std / b *
                             (b * dy[i] - sum_dy - cache.xhat[i] * sum_dy_xhat));
    }
  }
  return dx;
}

}  // namespace levemb::nn
