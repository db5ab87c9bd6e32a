#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "levemb/errors.hpp"
#include "levemb/tensor.hpp"

namespace levemb::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update at step t (t >= 1). Gradients are zeroed
// afterwards. Throws NumericError naming the first parameter whose gradient
// is not finite; no parameter is modified in that case.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, const AdamConfig& cfg, std::int64_t t) {
  if (t < 1) throw UsageError("adam step counter must start at 1");
  for (const Parameter<T>* p : params) {
    for (T g : p->grad.data()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in parameter '" + p->name + "'");
      }
    }
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const auto b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const auto step = static_cast<T>(cfg.lr / bc1);
  const auto inv_bc2 = static_cast<T>(1.0 / bc2);
  const auto eps = static_cast<T>(cfg.eps);
  for (Parameter<T>* p : params) {
    T* x = p->value.ptr();
    T* g = p->grad.ptr();
    T* m = p->adam_m.ptr();
    T* v = p->adam_v.ptr();
    for (std::size_t i = 0; i < p->size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      x[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
      g[i] = T{0};
    }
  }
}

// Adam with its own step counter.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}, std::int64_t steps_taken = 0)
      : cfg_(cfg), steps_(steps_taken) {}

  void step(std::span<Parameter<T>* const> params) {
    adam_step(params, cfg_, steps_ + 1);
    ++steps_;
  }

  std::int64_t steps() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t steps_ = 0;
};

}  // namespace levemb::nn
