// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fvr/core.hpp"

namespace fvr {

enum class LossKind { kCosGuidedMse, kMse, kCosine, kPhotometric };

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "cos_guided_mse") return LossKind::kCosGuidedMse;
  if (s == "mse") return LossKind::kMse;
  if (s == "cosine") return LossKind::kCosine;
  if (s == "photometric") return LossKind::kPhotometric;
  throw config_error("unknown loss kind: " + s);
}

struct LossResult {
  double loss = 0.0;
  std::vector<double> d_pred;
  bool degenerate = false;  // zero-norm pred or target hit the fallback
};

namespace detail {
inline double vnorm(const double* v, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}
inline double vdot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}
constexpr double kNormFloor = 1e-12;
}  // namespace detail

// Sum-of-squares error, exact gradient.
inline LossResult mse(const std::vector<double>& pred,
                      const std::vector<double>& target) {
  const int n = static_cast<int>(pred.size());
  LossResult r;
  r.d_pred.resize(n);
  for (int i = 0; i < n; ++i) {
    double d = pred[i] - target[i];
    r.loss += d * d;
    r.d_pred[i] = 2.0 * d;
  }
  return r;
}

// Cosine distance C = 1 - cos(pred, target), full gradient.
inline LossResult cosine_loss(const std::vector<double>& pred,
                              const std::vector<double>& target) {
  const int n = static_cast<int>(pred.size());
  LossResult r;
  r.d_pred.assign(n, 0.0);
  double np = detail::vnorm(pred.data(), n);
  double nt = detail::vnorm(target.data(), n);
  if (np < detail::kNormFloor || nt < detail::kNormFloor) {
    r.loss = 1.0;
    r.degenerate = true;
    return r;
  }
  double c = detail::vdot(pred.data(), target.data(), n) / (np * nt);
  r.loss = 1.0 - c;
  for (int i = 0; i < n; ++i)
    r.d_pred[i] = (c * pred[i] / np - target[i] / nt) / np;
  return r;
}

// Cosine-distance weighted squared error. The cosine factor acts as a
// stop-grad constant: d_pred = C * 2(pred - target) exactly.
inline LossResult cos_guided_mse(const std::vector<double>& pred,
                                 const std::vector<double>& target) {
  const int n = static_cast<int>(pred.size());
  LossResult r;
  r.d_pred.resize(n);
  double np = detail::vnorm(pred.data(), n);
  double nt = detail::vnorm(target.data(), n);
  double c;
  if (np < detail::kNormFloor || nt < detail::kNormFloor) {
    c = 1.0;  // neutral weighting on degenerate inputs
    r.degenerate = true;
  } else {
    c = 1.0 - detail::vdot(pred.data(), target.data(), n) / (np * nt);
  }
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = target[i] - pred[i];
    sq += d * d;
    r.d_pred[i] = c * 2.0 * (pred[i] - target[i]);
  }
  r.loss = c * sq;
  return r;
}

// Sum-convention MSE over the 3 color channels.
inline LossResult photometric_mse(const std::vector<double>& pred_rgb,
                                  const std::vector<double>& target_rgb) {
  return mse(pred_rgb, target_rgb);
}

inline LossResult evaluate_loss(LossKind kind, const std::vector<double>& pred,
                                const std::vector<double>& target) {
  switch (kind) {
    case LossKind::kCosGuidedMse:
      return cos_guided_mse(pred, target);
    case LossKind::kMse:
      return mse(pred, target);
    case LossKind::kCosine:
      return cosine_loss(pred, target);
    case LossKind::kPhotometric:
      return photometric_mse(pred, target);
  }
  throw config_error("invalid loss kind");
}

}  // namespace fvr
