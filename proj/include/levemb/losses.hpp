#pragma once

#include <string>
#include <string_view>

namespace levemb {

enum class LossKind { kMse, kMae, kReChi2, kPnll, kGnll };

struct LossSpec {
  LossKind kind = LossKind::kPnll;
  // Dilation k of the chi-squared NLL; only used by kGnll.
  double k = 1.0;

  void validate() const;
  std::string name() const;
  bool operator==(const LossSpec&) const = default;
};

// Accepts mse, mae, rechi2, pnll, gnll:<k>.
LossSpec parse_loss(std::string_view text);

// Predicted distances are clamped to this floor before any logarithm.
inline constexpr double kDistanceFloor = 1e-6;

struct LossValue {
  double value = 0.0;
  double grad = 0.0;  // d value / d dhat
};

// Per-pair loss and its derivative with respect to the predicted distance.
//   MSE     (dhat - d)^2
//   MAE     |dhat - d|
//   RECHI2  dhat - max(d - 2, 0) ln dhat
//   PNLL    dhat - d ln dhat
//   GNLL    dhat - max(d - 2/k, 0) ln dhat
// For the logarithmic losses the gradient is zero where dhat sits below the
// floor.
LossValue evaluate_loss(const LossSpec& spec, double dhat, double d);

}  // namespace levemb
