#include "levemb/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include "levemb/errors.hpp"

namespace levemb {

void LossSpec::validate() const {
  if (kind == LossKind::kGnll && !(k > 0.0 && std::isfinite(k))) {
    throw UsageError("gnll requires a finite k > 0");
  }
}

std::string LossSpec::name() const {
  switch (kind) {
    case LossKind::kMse: return "mse";
    case LossKind::kMae: return "mae";
    case LossKind::kReChi2: return "rechi2";
    case LossKind::kPnll: return "pnll";
    case LossKind::kGnll: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "gnll:%g", k);
      return buf;
    }
  }
  return "?";
}

LossSpec parse_loss(std::string_view text) {
  std::string key;
  for (char c : text) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "mse") return {LossKind::kMse};
  if (key == "mae") return {LossKind::kMae};
  if (key == "rechi2") return {LossKind::kReChi2};
  if (key == "pnll") return {LossKind::kPnll};
  if (key.rfind("gnll:", 0) == 0) {
    const std::string arg = key.substr(5);
    char* end = nullptr;
    const double k = std::strtod(arg.c_str(), &end);
    if (arg.empty() || end != arg.c_str() + arg.size()) {
      throw UsageError("bad gnll dilation '" + arg + "'");
    }
    LossSpec spec{LossKind::kGnll, k};
    spec.validate();
    return spec;
  }
  throw UsageError("unknown loss '" + std::string(text) + "' (mse, mae, rechi2, pnll, gnll:<k>)");
}

namespace {

LossValue log_loss(double dhat, double coeff) {
  if (dhat < kDistanceFloor) {
    return {kDistanceFloor - coeff * std::log(kDistanceFloor), 0.0};
  }
  return {dhat - coeff * std::log(dhat), 1.0 - coeff / dhat};
}

}  // namespace

LossValue evaluate_loss(const LossSpec& spec, double dhat, double d) {
  if (!(d >= 0.0)) throw NumericError("ground-truth distance must be non-negative");
  if (std::isnan(dhat)) throw NumericError("predicted distance is NaN");
  switch (spec.kind) {
    case LossKind::kMse: {
      const double e = dhat - d;
      return {e * e, 2.0 * e};
    }
    case LossKind::kMae: {
      const double e = dhat - d;
      return {std::abs(e), e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0)};
    }
    case LossKind::kReChi2:
      return log_loss(dhat, std::max(d - 2.0, 0.0));
    case LossKind::kPnll:
      return log_loss(dhat, d);
    case LossKind::kGnll:
      spec.validate();
      return log_loss(dhat, std::max(d - 2.0 / spec.k, 0.0));
  }
  throw UsageError("unhandled loss kind");
}

}  // namespace levemb
