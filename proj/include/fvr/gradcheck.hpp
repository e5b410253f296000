// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "fvr/camera.hpp"
#include "fvr/core.hpp"
#include "fvr/grid.hpp"
#include "fvr/losses.hpp"
#include "fvr/renderer.hpp"

namespace fvr {

struct GradCheckConfig {
  int grid_res = 4;
  int feature_dim = 8;
  int n_rays = 16;
  int n_samples = 8;
  double fd_step = 1e-4;
  double abs_floor = 1e-8;
  uint64_t seed = 0;
  LossKind loss = LossKind::kCosGuidedMse;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  size_t checked_params = 0;
};

// Central finite differences of the fitted objective against the
// analytic backward pass, over every density logit and feature entry of
// a random grid. The cos-guided loss is checked as optimized: its cosine
// factor is a stop-grad constant, so the differenced functional freezes
// the factor at the base point.
inline GradCheckResult run_gradcheck(const GradCheckConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, 0x67636b31));
  GridGeometry geom{{0, 0, 0},
                    {1, 1, 1},
                    cfg.grid_res, cfg.grid_res, cfg.grid_res};
  VoxelGrid grid;
  grid.geometry = geom;
  grid.feature_dim = cfg.feature_dim;
  grid.density_logits.resize(geom.voxel_count());
  grid.features.resize(geom.voxel_count() * cfg.feature_dim);
  for (auto& x : grid.density_logits) x = rng.uniform(-1.5, 1.5);
  for (auto& x : grid.features) x = rng.uniform(-1.0, 1.0);

  // Rays crossing the unit cube from random entry points.
  std::vector<RaySamples> rays;
  std::vector<std::vector<double>> targets;
  for (int r = 0; r < cfg.n_rays; ++r) {
    Ray ray;
    ray.origin = {rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3),
                  rng.uniform(0.05, 0.3)};
    Vec3 dir{rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0),
             rng.uniform(0.3, 1.0)};
    ray.direction = normalized(dir);
    rays.push_back(make_samples(ray, 0.0, 0.8, cfg.n_samples));
    std::vector<double> t(cfg.feature_dim);
    for (auto& x : t) x = rng.uniform(-1.0, 1.0);
    targets.push_back(t);
  }

  // Frozen cosine factors for the stop-grad objective.
  std::vector<double> frozen_c(cfg.n_rays, 1.0);
  auto cosine_factor = [&](const std::vector<double>& pred,
                           const std::vector<double>& target) {
    double np = 0.0, nt = 0.0, d = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
      np += pred[i] * pred[i];
      nt += target[i] * target[i];
      d += pred[i] * target[i];
    }
    if (np < 1e-24 || nt < 1e-24) return 1.0;
    return 1.0 - d / std::sqrt(np * nt);
  };
  for (int r = 0; r < cfg.n_rays; ++r) {
    RenderOutput out = render_ray(grid, rays[r]);
    frozen_c[r] = cosine_factor(out.feature, targets[r]);
  }

  auto objective = [&](const VoxelGrid& g) {
    double total = 0.0;
    for (int r = 0; r < cfg.n_rays; ++r) {
      RenderOutput out = render_ray(g, rays[r]);
      double sq = 0.0;
      for (int l = 0; l < cfg.feature_dim; ++l) {
        double d = targets[r][l] - out.feature[l];
        sq += d * d;
      }
      switch (cfg.loss) {
        case LossKind::kCosGuidedMse:
          total += frozen_c[r] * sq;
          break;
        case LossKind::kMse:
        case LossKind::kPhotometric:
          total += sq;
          break;
        case LossKind::kCosine:
          total += cosine_factor(out.feature, targets[r]);
          break;
      }
    }
    return total / cfg.n_rays;
  };

  // Analytic gradient.
  GridGradient grad = GridGradient::zeros_like(grid);
  for (int r = 0; r < cfg.n_rays; ++r) {
    RenderOutput out = render_ray(grid, rays[r]);
    LossResult lr;
    switch (cfg.loss) {
      case LossKind::kCosGuidedMse:
        lr = cos_guided_mse(out.feature, targets[r]);
        break;
      case LossKind::kMse:
      case LossKind::kPhotometric:
        lr = mse(out.feature, targets[r]);
        break;
      case LossKind::kCosine:
        lr = cosine_loss(out.feature, targets[r]);
        break;
    }
    for (auto& g : lr.d_pred) g /= cfg.n_rays;
    render_ray_backward(grid, rays[r], lr.d_pred.data(), nullptr, grad);
  }

  GradCheckResult res;
  auto check_param = [&](double& param, double analytic) {
    double saved = param;
    param = saved + cfg.fd_step;
    double up = objective(grid);
    param = saved - cfg.fd_step;
    double down = objective(grid);
    param = saved;
    double fd = (up - down) / (2.0 * cfg.fd_step);
    double abs_err = std::abs(analytic - fd);
    res.max_abs_error = std::max(res.max_abs_error, abs_err);
    if (abs_err > cfg.abs_floor) {
      double rel = abs_err / std::max(std::abs(analytic), std::abs(fd));
      res.max_rel_error = std::max(res.max_rel_error, rel);
    }
    ++res.checked_params;
  };

  for (size_t i = 0; i < grid.density_logits.size(); ++i)
    check_param(grid.density_logits[i], grad.d_density_logits[i]);
  for (size_t i = 0; i < grid.features.size(); ++i)
    check_param(grid.features[i], grad.d_features[i]);
  return res;
}

}  // namespace fvr
