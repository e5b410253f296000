// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "fvr/camera.hpp"
#include "fvr/core.hpp"
#include "fvr/feature_map.hpp"
#include "fvr/grid.hpp"
#include "fvr/losses.hpp"
#include "fvr/optimizer.hpp"
#include "fvr/renderer.hpp"

namespace fvr {

struct FitConfig {
  int n_rays_per_step = 32768;
  int n_samples_per_ray = 100;
  int horizon = 12;
  int steps = 2000;
  double learning_rate = 5e-2;
  AdamConfig adam;
  LossKind loss = LossKind::kCosGuidedMse;
  double near = 0.5;
  double far = 0.0;  // <= 0: near + grid diagonal
  uint64_t rng_seed = 0;
  double density_scale = 1.0;
  SampleMode sample_mode = SampleMode::kStratified;
  double tv_weight = 0.0;  // optional density smoothness term, off by default

  void validate() const {
    if (n_rays_per_step < 1 || n_samples_per_ray < 2 || steps < 0 ||
        horizon < 0)
      throw config_error("fit config counts must be positive");
    if (!(learning_rate > 0.0)) throw config_error("learning_rate must be > 0");
  }
};

struct FitReport {
  std::vector<double> loss_curve;
  VoxelGrid grid;
  GridOptimizerState optimizer;
  double wall_seconds = 0.0;
  long zero_norm_hits = 0;
  double out_of_grid_fraction = 0.0;
};

// Target maps keyed by (frame offset, camera index).
using TargetSet = std::map<std::pair<int, int>, FeatureMap>;

namespace detail {

// Squared-difference total variation on density logits; gradient added
// in place.
inline double tv_density(const VoxelGrid& g, double weight,
                         std::vector<double>& grad) {
  const GridGeometry& geom = g.geometry;
  double loss = 0.0;
  auto pair_term = [&](size_t i, size_t j) {
    double d = g.density_logits[i] - g.density_logits[j];
    loss += weight * d * d;
    grad[i] += weight * 2.0 * d;
    grad[j] -= weight * 2.0 * d;
  };
  for (int z = 0; z < geom.nz; ++z)
    for (int y = 0; y < geom.ny; ++y)
      for (int x = 0; x < geom.nx; ++x) {
        size_t i = geom.index(x, y, z);
        if (x + 1 < geom.nx) pair_term(i, geom.index(x + 1, y, z));
        if (y + 1 < geom.ny) pair_term(i, geom.index(x, y + 1, z));
        if (z + 1 < geom.nz) pair_term(i, geom.index(x, y, z + 1));
      }
  return loss;
}

}  // namespace detail

// Fits the grid to the target maps by first-order optimization of the
// selected per-ray loss. Rays are resampled every step over the
// temporal horizon. Fully deterministic for a fixed seed: per-ray
// sample seeds derive from (seed, step, ray index) and gradients
// accumulate in ray order.
inline FitReport fit_scene(const FramePoseTrack& track,
                           const TargetSet& targets, const FitConfig& cfg,
                           VoxelGrid init) {
  cfg.validate();
  track.validate();
  init.validate();
  const bool photometric = cfg.loss == LossKind::kPhotometric;
  if (photometric && !init.has_rgb())
    throw config_error("photometric loss requires a grid with rgb channels");

  const int target_dim = photometric ? 3 : init.feature_dim;
  for (const auto& frame : track.frames) {
    if (std::abs(frame.offset) > cfg.horizon) continue;
    for (size_t ci = 0; ci < frame.cameras.size(); ++ci) {
      auto it = targets.find({frame.offset, static_cast<int>(ci)});
      if (it == targets.end())
        throw config_error("missing target map for frame offset " +
                           std::to_string(frame.offset) + " camera " +
                           std::to_string(ci));
      if (it->second.channels != target_dim)
        throw config_error("target map channel count does not match the loss");
    }
  }

  double far = cfg.far;
  if (far <= 0.0) {
    Vec3 d = init.geometry.max_corner - init.geometry.min_corner;
    far = cfg.near + norm(d);
  }
  if (far <= cfg.near) throw config_error("far plane must exceed near plane");

  FitReport report;
  auto t_start = std::chrono::steady_clock::now();

  GridGradient grad = GridGradient::zeros_like(init);
  GridOptimizerState opt = GridOptimizerState::zeros_like(init);
  std::vector<double> pred(target_dim), target(target_dim);
  long total_samples = 0, oob_samples = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    uint64_t step_seed = mix_seed(cfg.rng_seed, static_cast<uint64_t>(step));
    std::vector<Ray> rays =
        sample_ray_batch(track, cfg.n_rays_per_step, cfg.horizon, step_seed);
    grad.set_zero();
    double loss_sum = 0.0;
    const double inv_n = 1.0 / cfg.n_rays_per_step;

    for (size_t ri = 0; ri < rays.size(); ++ri) {
      const Ray& ray = rays[ri];
      const FeatureMap& tmap =
          targets.at({ray.frame_index, ray.camera_index});
      target_feature(tmap, ray.u, ray.v, target.data());

      RaySamples samples =
          make_samples(ray, cfg.near, far, cfg.n_samples_per_ray,
                       cfg.sample_mode, mix_seed(step_seed, ri));
      RenderOutput out = render_ray(init, samples, cfg.density_scale);
      total_samples += cfg.n_samples_per_ray;
      oob_samples += out.out_of_grid_samples;

      const std::vector<double>& rendered = photometric ? out.rgb : out.feature;
      LossResult lr = evaluate_loss(cfg.loss, rendered, target);
      if (lr.degenerate) ++report.zero_norm_hits;
      loss_sum += lr.loss;
      for (auto& g : lr.d_pred) g *= inv_n;
      if (photometric)
        render_ray_backward(init, samples, nullptr, lr.d_pred.data(), grad,
                            cfg.density_scale);
      else
        render_ray_backward(init, samples, lr.d_pred.data(), nullptr, grad,
                            cfg.density_scale);
    }

    double loss = loss_sum * inv_n;
    if (cfg.tv_weight > 0.0)
      loss += detail::tv_density(init, cfg.tv_weight, grad.d_density_logits);
    if (!std::isfinite(loss))
      throw numeric_error("non-finite loss at step " + std::to_string(step));
    report.loss_curve.push_back(loss);

    adam_update(init.density_logits, grad.d_density_logits, opt.density,
                cfg.learning_rate, cfg.adam);
    adam_update(init.features, grad.d_features, opt.features,
                cfg.learning_rate, cfg.adam);
    if (photometric)
      adam_update(init.rgb, grad.d_rgb, opt.rgb, cfg.learning_rate, cfg.adam);
  }

  report.out_of_grid_fraction =
      total_samples == 0 ? 0.0
                         : static_cast<double>(oob_samples) / total_samples;
  report.grid = std::move(init);
  report.optimizer = std::move(opt);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

}  // namespace fvr
