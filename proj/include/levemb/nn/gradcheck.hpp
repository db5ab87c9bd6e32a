#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>

#include "levemb/rng.hpp"
#include "levemb/tensor.hpp"

namespace levemb::nn {

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  // Coordinates checked per tensor; larger tensors are sampled.
  std::size_t max_coords = 64;
  // Denominator floor for the relative error of near-zero gradients.
  double abs_floor = 1e-7;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
  bool passed = true;
};

// Compares the analytic gradients already stored in `params[i]->grad`
// against central differences of `loss`. Values are restored afterwards.
inline GradCheckReport grad_check(const std::function<double()>& loss,
                                  std::span<Parameter<double>* const> params,
                                  const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  Rng rng(opt.seed);
  for (Parameter<double>* p : params) {
    std::vector<std::size_t> coords(p->size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > opt.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords);
    }
    for (std::size_t i : coords) {
      double& x = p->value[i];
      const double saved = x;
      x = saved + opt.h;
      const double up = loss();
      x = saved - opt.h;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * opt.h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.abs_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.passed = report.max_rel_error < opt.tolerance;
  return report;
}

}  // namespace levemb::nn
