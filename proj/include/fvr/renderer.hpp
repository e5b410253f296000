// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "fvr/camera.hpp"
#include "fvr/core.hpp"
#include "fvr/feature_map.hpp"
#include "fvr/grid.hpp"

namespace fvr {

enum class SampleMode { kUniform, kStratified };

struct RaySamples {
  std::vector<double> ts;      // strictly increasing distances
  std::vector<double> deltas;  // per-sample spacing
  std::vector<Vec3> positions;
};

struct RenderOutput {
  std::vector<double> feature;   // accumulated feature vector
  std::vector<double> weights;   // per-sample rendering weights
  double transmittance_end = 1.0;
  double expected_depth = 0.0;   // diagnostic
  std::vector<double> rgb;       // empty unless the grid carries rgb
  int out_of_grid_samples = 0;   // diagnostic
};

// Distances along the ray. Uniform mode spans [near, far] inclusive;
// delta_j = t_{j+1} - t_j, with the last delta set to (far-near)/n.
// Stratified mode draws one point per even bin.
inline RaySamples make_samples(const Ray& ray, double near, double far, int n,
                               SampleMode mode = SampleMode::kUniform,
                               uint64_t rng_seed = 0) {
  if (!(near >= 0.0 && far > near)) throw domain_error("need 0 <= near < far");
  if (n < 2) throw domain_error("need at least 2 samples per ray");
  RaySamples s;
  s.ts.resize(n);
  s.deltas.resize(n);
  if (mode == SampleMode::kUniform) {
    double step = (far - near) / (n - 1);
    for (int j = 0; j < n; ++j) s.ts[j] = near + j * step;
  } else {
    Rng rng(rng_seed);
    double bin = (far - near) / n;
    for (int j = 0; j < n; ++j) s.ts[j] = near + (j + rng.uniform()) * bin;
  }
  for (int j = 0; j + 1 < n; ++j) s.deltas[j] = s.ts[j + 1] - s.ts[j];
  s.deltas[n - 1] = (far - near) / n;
  s.positions.resize(n);
  for (int j = 0; j < n; ++j)
    s.positions[j] = ray.origin + s.ts[j] * ray.direction;
  return s;
}

// Front-to-back accumulation: w_j = T_j (1 - exp(-sigma_j delta_j)),
// T updated multiplicatively so sum(w) + T_end telescopes to 1.
// density_scale multiplies the interpolated density before absorption.
// transmittance_cutoff > 0 stops marching once T drops below it.
inline RenderOutput render_ray(const VoxelGrid& grid, const RaySamples& samples,
                               double density_scale = 1.0,
                               double transmittance_cutoff = 0.0) {
  const int n = static_cast<int>(samples.ts.size());
  const int L = grid.feature_dim;
  RenderOutput out;
  out.feature.assign(L, 0.0);
  out.weights.assign(n, 0.0);
  if (grid.has_rgb()) out.rgb.assign(3, 0.0);
  std::vector<double> psi(L);
  double rgb[3];
  double t_cur = 1.0;
  double weight_sum = 0.0;
  double depth_sum = 0.0;
  for (int j = 0; j < n; ++j) {
    const Vec3& p = samples.positions[j];
    if (!grid.geometry.contains(p)) {
      ++out.out_of_grid_samples;
      continue;  // zero density and features: weight stays 0
    }
    double sigma = density_scale * sample_density(grid, p);
    double survive = std::exp(-sigma * samples.deltas[j]);
    double w = t_cur * (1.0 - survive);
    out.weights[j] = w;
    if (w != 0.0) {
      sample_feature(grid, p, psi.data());
      for (int l = 0; l < L; ++l) out.feature[l] += w * psi[l];
      if (grid.has_rgb()) {
        sample_rgb(grid, p, rgb);
        for (int l = 0; l < 3; ++l) out.rgb[l] += w * rgb[l];
      }
      weight_sum += w;
      depth_sum += w * samples.ts[j];
    }
    t_cur *= survive;
    if (transmittance_cutoff > 0.0 && t_cur < transmittance_cutoff) break;
  }
  out.transmittance_end = t_cur;
  out.expected_depth = depth_sum / std::max(weight_sum, 1e-10);
  return out;
}

// Analytic adjoint of render_ray for the feature (and rgb) outputs.
// Forward quantities are recomputed here rather than cached.
//
//   dPsi/dpsi_j   = w_j
//   dPsi/dsigma_j = delta_j [ T_j e^{-sigma_j delta_j} psi_j
//                             - sum_{k>j} w_k psi_k ]
//
// chained through density_scale, the trilinear weights and the per-corner
// sigmoid. d_feature has length L; d_rgb may be null.
inline void render_ray_backward(const VoxelGrid& grid,
                                const RaySamples& samples,
                                const double* d_feature, const double* d_rgb,
                                GridGradient& grad,
                                double density_scale = 1.0) {
  const int n = static_cast<int>(samples.ts.size());
  const int L = grid.feature_dim;

  // Forward recomputation.
  std::vector<double> sigma(n, 0.0), survive(n, 1.0), weight(n, 0.0);
  std::vector<double> psi(static_cast<size_t>(n) * L, 0.0);
  std::vector<double> rgb(grid.has_rgb() ? n * 3 : 0, 0.0);
  std::vector<char> inside(n, 0);
  double t_cur = 1.0;
  for (int j = 0; j < n; ++j) {
    const Vec3& p = samples.positions[j];
    if (!grid.geometry.contains(p)) continue;
    inside[j] = 1;
    sigma[j] = density_scale * sample_density(grid, p);
    survive[j] = std::exp(-sigma[j] * samples.deltas[j]);
    weight[j] = t_cur * (1.0 - survive[j]);
    sample_feature(grid, p, &psi[static_cast<size_t>(j) * L]);
    if (grid.has_rgb()) sample_rgb(grid, p, &rgb[j * 3]);
    t_cur *= survive[j];
  }

  // proj_j = <psi_j, d_feature> (+ rgb term); suffix_j = sum_{k>j} w_k proj_k
  std::vector<double> proj(n, 0.0);
  for (int j = 0; j < n; ++j) {
    if (!inside[j]) continue;
    double s = 0.0;
    if (d_feature != nullptr) {
      const double* pj = &psi[static_cast<size_t>(j) * L];
      for (int l = 0; l < L; ++l) s += pj[l] * d_feature[l];
    }
    if (d_rgb != nullptr && grid.has_rgb())
      for (int l = 0; l < 3; ++l) s += rgb[j * 3 + l] * d_rgb[l];
    proj[j] = s;
  }
  double suffix = 0.0;
  std::vector<double> d_sigma(n, 0.0);
  double t_before = 1.0;
  // T_j values need a forward sweep; recompute prefix transmittance.
  std::vector<double> t_at(n, 1.0);
  for (int j = 0; j < n; ++j) {
    t_at[j] = t_before;
    t_before *= survive[j];
  }
  for (int j = n - 1; j >= 0; --j) {
    if (inside[j])
      d_sigma[j] =
          samples.deltas[j] * (t_at[j] * survive[j] * proj[j] - suffix);
    suffix += weight[j] * proj[j];
  }

  std::vector<double> d_psi(L);
  double d_rgb_j[3];
  for (int j = 0; j < n; ++j) {
    if (!inside[j]) continue;
    const double* df = nullptr;
    if (d_feature != nullptr) {
      for (int l = 0; l < L; ++l) d_psi[l] = weight[j] * d_feature[l];
      df = d_psi.data();
    }
    const double* drgb = nullptr;
    if (d_rgb != nullptr && grid.has_rgb()) {
      for (int l = 0; l < 3; ++l) d_rgb_j[l] = weight[j] * d_rgb[l];
      drgb = d_rgb_j;
    }
    scatter_gradient(grid, samples.positions[j], d_sigma[j] * density_scale,
                     df, drgb, grad);
  }
}

struct RenderedMaps {
  FeatureMap feature;  // H x W x L
  FeatureMap depth;    // H x W x 1, expected depth
  FeatureMap rgb;      // H x W x 3 when the grid has rgb, else empty
};

// Renders one ray per pixel center, row-major.
inline RenderedMaps render_feature_map(const VoxelGrid& grid,
                                       const CameraModel& cam, double near,
                                       double far, int n_samples,
                                       double density_scale = 1.0) {
  RenderedMaps maps;
  maps.feature = FeatureMap::zeros(cam.height, cam.width, grid.feature_dim);
  maps.depth = FeatureMap::zeros(cam.height, cam.width, 1);
  if (grid.has_rgb()) maps.rgb = FeatureMap::zeros(cam.height, cam.width, 3);
  for (int row = 0; row < cam.height; ++row) {
    for (int col = 0; col < cam.width; ++col) {
      Ray ray = pixel_to_ray(cam, col + 0.5, row + 0.5);
      RaySamples s = make_samples(ray, near, far, n_samples);
      RenderOutput out = render_ray(grid, s, density_scale);
      double* px = maps.feature.at(row, col);
      for (int l = 0; l < grid.feature_dim; ++l) px[l] = out.feature[l];
      maps.depth.at(row, col)[0] = out.expected_depth;
      if (grid.has_rgb()) {
        double* c = maps.rgb.at(row, col);
        for (int l = 0; l < 3; ++l) c[l] = out.rgb[l];
      }
    }
  }
  return maps;
}

}  // namespace fvr
