// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fvr/core.hpp"

namespace fvr {

struct GridGeometry {
  Vec3 min_corner;
  Vec3 max_corner;
  int nx = 0, ny = 0, nz = 0;

  void validate() const {
    if (!(max_corner.x > min_corner.x && max_corner.y > min_corner.y &&
          max_corner.z > min_corner.z))
      throw domain_error("grid max_corner must exceed min_corner");
    if (nx < 1 || ny < 1 || nz < 1)
      throw domain_error("grid resolution must be >= 1 per axis");
  }

  size_t voxel_count() const {
    return static_cast<size_t>(nx) * ny * nz;
  }
  Vec3 voxel_size() const {
    return {(max_corner.x - min_corner.x) / nx,
            (max_corner.y - min_corner.y) / ny,
            (max_corner.z - min_corner.z) / nz};
  }
  // x-fastest linear index
  size_t index(int x, int y, int z) const {
    return static_cast<size_t>(x) +
           static_cast<size_t>(nx) * (static_cast<size_t>(y) +
                                      static_cast<size_t>(ny) * z);
  }
  Vec3 voxel_center(int x, int y, int z) const {
    Vec3 vs = voxel_size();
    return {min_corner.x + (x + 0.5) * vs.x, min_corner.y + (y + 0.5) * vs.y,
            min_corner.z + (z + 0.5) * vs.z};
  }
  bool contains(const Vec3& p) const {
    return p.x >= min_corner.x && p.x <= max_corner.x && p.y >= min_corner.y &&
           p.y <= max_corner.y && p.z >= min_corner.z && p.z <= max_corner.z;
  }
};

// Trilinear cell for a world point. Values live at voxel centers; corner
// indices clamp to the grid edge so the identity at boundary centers is
// exact. Weights are a partition of unity for any point.
struct TrilinearCell {
  int ix[2], iy[2], iz[2];
  double wx[2], wy[2], wz[2];
};

inline TrilinearCell trilinear_cell(const GridGeometry& g, const Vec3& p) {
  Vec3 vs = g.voxel_size();
  double gx = (p.x - g.min_corner.x) / vs.x - 0.5;
  double gy = (p.y - g.min_corner.y) / vs.y - 0.5;
  double gz = (p.z - g.min_corner.z) / vs.z - 0.5;
  auto split = [](double t, int n, int* idx, double* w) {
    double f = std::floor(t);
    int i0 = static_cast<int>(f);
    double frac = t - f;
    int i1 = i0 + 1;
    idx[0] = std::min(std::max(i0, 0), n - 1);
    idx[1] = std::min(std::max(i1, 0), n - 1);
    w[0] = 1.0 - frac;
    w[1] = frac;
  };
  TrilinearCell c;
  split(gx, g.nx, c.ix, c.wx);
  split(gy, g.ny, c.iy, c.wy);
  split(gz, g.nz, c.iz, c.wz);
  return c;
}

// Dense optimizable scene: density logits plus per-voxel feature vectors,
// optionally a view-independent RGB channel.
struct VoxelGrid {
  GridGeometry geometry;
  int feature_dim = 0;
  std::vector<double> density_logits;  // voxel_count
  std::vector<double> features;        // voxel_count * feature_dim, channel-fastest
  std::vector<double> rgb;             // empty, or voxel_count * 3

  bool has_rgb() const { return !rgb.empty(); }

  static VoxelGrid create(const GridGeometry& geom, int feature_dim,
                          bool with_rgb = false, double init_logit = -2.0,
                          double feature_noise = 0.01, uint64_t seed = 0) {
    geom.validate();
    if (feature_dim < 1) throw domain_error("feature_dim must be >= 1");
    VoxelGrid g;
    g.geometry = geom;
    g.feature_dim = feature_dim;
    size_t n = geom.voxel_count();
    g.density_logits.assign(n, init_logit);
    g.features.assign(n * feature_dim, 0.0);
    Rng rng(mix_seed(seed, 0x67726964));
    for (auto& f : g.features) f = rng.uniform(-feature_noise, feature_noise);
    if (with_rgb) {
      g.rgb.assign(n * 3, 0.0);
      for (auto& c : g.rgb) c = rng.uniform(0.0, feature_noise);
    }
    return g;
  }

  void validate() const {
    geometry.validate();
    if (density_logits.size() != geometry.voxel_count())
      throw domain_error("density array shape mismatch");
    if (features.size() != geometry.voxel_count() * feature_dim)
      throw domain_error("feature array shape mismatch");
    if (!rgb.empty() && rgb.size() != geometry.voxel_count() * 3)
      throw domain_error("rgb array shape mismatch");
  }
};

struct GridGradient {
  std::vector<double> d_density_logits;
  std::vector<double> d_features;
  std::vector<double> d_rgb;

  static GridGradient zeros_like(const VoxelGrid& g) {
    GridGradient gr;
    gr.d_density_logits.assign(g.density_logits.size(), 0.0);
    gr.d_features.assign(g.features.size(), 0.0);
    gr.d_rgb.assign(g.rgb.size(), 0.0);
    return gr;
  }
  void set_zero() {
    std::fill(d_density_logits.begin(), d_density_logits.end(), 0.0);
    std::fill(d_features.begin(), d_features.end(), 0.0);
    std::fill(d_rgb.begin(), d_rgb.end(), 0.0);
  }
  void add(const GridGradient& o) {
    for (size_t i = 0; i < d_density_logits.size(); ++i)
      d_density_logits[i] += o.d_density_logits[i];
    for (size_t i = 0; i < d_features.size(); ++i)
      d_features[i] += o.d_features[i];
    for (size_t i = 0; i < d_rgb.size(); ++i) d_rgb[i] += o.d_rgb[i];
  }
};

// Trilinear sample of sigmoid(density). Zero outside the grid.
inline double sample_density(const VoxelGrid& grid, const Vec3& p) {
  if (!is_finite(p)) throw domain_error("non-finite sample position");
  if (!grid.geometry.contains(p)) return 0.0;
  TrilinearCell c = trilinear_cell(grid.geometry, p);
  double acc = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int d = 0; d < 2; ++d) {
        size_t idx = grid.geometry.index(c.ix[a], c.iy[b], c.iz[d]);
        acc += c.wx[a] * c.wy[b] * c.wz[d] * sigmoid(grid.density_logits[idx]);
      }
  return acc;
}

// Trilinear sample of the feature vector into `out` (feature_dim values).
// Zero vector outside the grid.
inline void sample_feature(const VoxelGrid& grid, const Vec3& p, double* out) {
  if (!is_finite(p)) throw domain_error("non-finite sample position");
  const int L = grid.feature_dim;
  std::fill(out, out + L, 0.0);
  if (!grid.geometry.contains(p)) return;
  TrilinearCell c = trilinear_cell(grid.geometry, p);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int d = 0; d < 2; ++d) {
        size_t idx = grid.geometry.index(c.ix[a], c.iy[b], c.iz[d]);
        double w = c.wx[a] * c.wy[b] * c.wz[d];
        const double* f = &grid.features[idx * L];
        for (int l = 0; l < L; ++l) out[l] += w * f[l];
      }
}

inline std::vector<double> sample_feature(const VoxelGrid& grid, const Vec3& p) {
  std::vector<double> out(grid.feature_dim);
  sample_feature(grid, p, out.data());
  return out;
}

inline void sample_rgb(const VoxelGrid& grid, const Vec3& p, double out[3]) {
  out[0] = out[1] = out[2] = 0.0;
  if (!grid.has_rgb() || !grid.geometry.contains(p)) return;
  TrilinearCell c = trilinear_cell(grid.geometry, p);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int d = 0; d < 2; ++d) {
        size_t idx = grid.geometry.index(c.ix[a], c.iy[b], c.iz[d]);
        double w = c.wx[a] * c.wy[b] * c.wz[d];
        for (int l = 0; l < 3; ++l) out[l] += w * grid.rgb[idx * 3 + l];
      }
}

// Adjoint of the samplers. d_density is w.r.t. the interpolated sigmoid
// density; the chain through sigmoid'(logit) = s(1-s) happens per corner.
// Out-of-grid points contribute nothing.
inline void scatter_gradient(const VoxelGrid& grid, const Vec3& p,
                             double d_density, const double* d_feature,
                             const double* d_rgb, GridGradient& grad) {
  if (!is_finite(p)) throw domain_error("non-finite sample position");
  if (!grid.geometry.contains(p)) return;
  const int L = grid.feature_dim;
  TrilinearCell c = trilinear_cell(grid.geometry, p);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int d = 0; d < 2; ++d) {
        size_t idx = grid.geometry.index(c.ix[a], c.iy[b], c.iz[d]);
        double w = c.wx[a] * c.wy[b] * c.wz[d];
        if (d_density != 0.0) {
          double s = sigmoid(grid.density_logits[idx]);
          grad.d_density_logits[idx] += d_density * w * s * (1.0 - s);
        }
        if (d_feature != nullptr) {
          double* g = &grad.d_features[idx * L];
          for (int l = 0; l < L; ++l) g[l] += w * d_feature[l];
        }
        if (d_rgb != nullptr && !grad.d_rgb.empty()) {
          for (int l = 0; l < 3; ++l) grad.d_rgb[idx * 3 + l] += w * d_rgb[l];
        }
      }
}

// ---- grid file ----
//
// magic "FVRGRID1", u32 version, u32 flags (bit0: rgb present),
// u32 X Y Z L, f64 min/max corners, then density logits, features and
// (optionally) rgb as little-endian f32, voxels x-fastest, channels
// contiguous per voxel.

namespace detail {
inline void write_bytes(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
inline void read_bytes(std::ifstream& in, void* p, size_t n,
                       const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw io_error("truncated file: " + path);
}
inline void write_f32_array(std::ofstream& out, const std::vector<double>& v) {
  std::vector<float> tmp(v.begin(), v.end());
  write_bytes(out, tmp.data(), tmp.size() * 4);
}
inline void read_f32_array(std::ifstream& in, std::vector<double>& v, size_t n,
                           const std::string& path) {
  std::vector<float> tmp(n);
  read_bytes(in, tmp.data(), n * 4, path);
  v.assign(tmp.begin(), tmp.end());
}
}  // namespace detail

inline void save_grid(const VoxelGrid& grid, const std::string& path) {
  grid.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open grid file for writing: " + path);
  const char magic[8] = {'F', 'V', 'R', 'G', 'R', 'I', 'D', '1'};
  detail::write_bytes(out, magic, 8);
  uint32_t version = 1;
  uint32_t flags = grid.has_rgb() ? 1u : 0u;
  uint32_t dims[4] = {static_cast<uint32_t>(grid.geometry.nx),
                      static_cast<uint32_t>(grid.geometry.ny),
                      static_cast<uint32_t>(grid.geometry.nz),
                      static_cast<uint32_t>(grid.feature_dim)};
  detail::write_bytes(out, &version, 4);
  detail::write_bytes(out, &flags, 4);
  detail::write_bytes(out, dims, 16);
  double corners[6] = {grid.geometry.min_corner.x, grid.geometry.min_corner.y,
                       grid.geometry.min_corner.z, grid.geometry.max_corner.x,
                       grid.geometry.max_corner.y, grid.geometry.max_corner.z};
  detail::write_bytes(out, corners, 48);
  detail::write_f32_array(out, grid.density_logits);
  detail::write_f32_array(out, grid.features);
  if (grid.has_rgb()) detail::write_f32_array(out, grid.rgb);
  if (!out) throw io_error("failed writing grid file: " + path);
}

inline VoxelGrid load_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open grid file: " + path);
  char magic[8];
  detail::read_bytes(in, magic, 8, path);
  if (std::memcmp(magic, "FVRGRID1", 8) != 0)
    throw io_error("not a grid file: " + path);
  uint32_t version = 0, flags = 0, dims[4];
  detail::read_bytes(in, &version, 4, path);
  if (version != 1) throw io_error("unsupported grid file version: " + path);
  detail::read_bytes(in, &flags, 4, path);
  detail::read_bytes(in, dims, 16, path);
  double corners[6];
  detail::read_bytes(in, corners, 48, path);
  VoxelGrid g;
  g.geometry.nx = static_cast<int>(dims[0]);
  g.geometry.ny = static_cast<int>(dims[1]);
  g.geometry.nz = static_cast<int>(dims[2]);
  g.feature_dim = static_cast<int>(dims[3]);
  g.geometry.min_corner = {corners[0], corners[1], corners[2]};
  g.geometry.max_corner = {corners[3], corners[4], corners[5]};
  g.geometry.validate();
  size_t n = g.geometry.voxel_count();
  detail::read_f32_array(in, g.density_logits, n, path);
  detail::read_f32_array(in, g.features, n * g.feature_dim, path);
  if (flags & 1u) detail::read_f32_array(in, g.rgb, n * 3, path);
  g.validate();
  return g;
}

}  // namespace fvr
