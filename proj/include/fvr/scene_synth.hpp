// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fvr/camera.hpp"
#include "fvr/core.hpp"
#include "fvr/feature_map.hpp"
#include "fvr/grid.hpp"
#include "fvr/inference.hpp"
#include "fvr/vocabulary.hpp"

namespace fvr {

// Axis-aligned primitives voxelized by a voxel-center membership test.
struct Primitive {
  enum class Shape { kBox, kSphere, kPlane, kPole };
  Shape shape = Shape::kBox;
  std::string class_name;
  // box: p0 = min corner, p1 = max corner
  // sphere: p0 = center, r0 = radius
  // plane: slab from grid bottom up to height r0
  // pole: p0.x/p0.y = axis, r0 = radius, r1 = height above grid bottom
  Vec3 p0, p1;
  double r0 = 0.0, r1 = 0.0;

  bool contains(const Vec3& c, const GridGeometry& geom) const {
    switch (shape) {
      case Shape::kBox:
        return c.x >= p0.x && c.x <= p1.x && c.y >= p0.y && c.y <= p1.y &&
               c.z >= p0.z && c.z <= p1.z;
      case Shape::kSphere: {
        Vec3 d = c - p0;
        return dot(d, d) <= r0 * r0;
      }
      case Shape::kPlane:
        return c.z <= geom.min_corner.z + r0;
      case Shape::kPole: {
        double dx = c.x - p0.x, dy = c.y - p0.y;
        return dx * dx + dy * dy <= r0 * r0 &&
               c.z <= geom.min_corner.z + r1;
      }
    }
    return false;
  }
};

struct SceneSpec {
  GridGeometry geometry;
  std::vector<Primitive> primitives;
  EmbeddingConfig embedding;
  // camera orbit
  int n_cameras = 20;
  double orbit_radius = 10.0;
  double orbit_height = 4.0;
  double orbit_tilt = 0.0;  // sinusoidal height amplitude around the ring
  int image_width = 48, image_height = 48;
  double focal = 40.0;
  int horizon = 0;                // temporal offsets -horizon..+horizon
  double orbit_step_deg = 9.0;    // per-frame rotation of the whole orbit
  double near = 2.0, far = 18.0;
  double density_scale = 1.0;     // k applied to sigmoid density
  double target_noise_std = 0.0;  // additive Gaussian on targets
  // Per-voxel feature texture: normalize(class embedding + jitter * gaussian).
  // Untextured surfaces admit transparent fits that reproduce every view with
  // inflated feature magnitudes; texture adds the parallax cues that make the
  // geometry identifiable from feature maps alone.
  double feature_jitter = 0.0;
  uint64_t seed = 0;
  bool with_rgb = true;

  std::vector<std::string> class_names() const {
    std::vector<std::string> names;
    for (const auto& p : primitives) {
      bool seen = false;
      for (const auto& n : names)
        if (n == p.class_name) seen = true;
      if (!seen) names.push_back(p.class_name);
    }
    return names;
  }
};

struct GroundTruthBundle {
  SceneSpec spec;
  VoxelGrid grid;          // near-binary densities, class embedding features
  SemanticGrid semantic;   // exact labels
  FramePoseTrack track;
  Vocabulary vocabulary;
  // target maps keyed by (frame offset, camera index)
  std::map<std::pair<int, int>, FeatureMap> feature_targets;
  std::map<std::pair<int, int>, FeatureMap> rgb_targets;
};

// ---- scene spec file ----
// Key/value lines plus one `primitive` line per shape:
//   primitive box <class> <min xyz> <max xyz>
//   primitive sphere <class> <center xyz> <radius>
//   primitive plane <class> <height>
//   primitive pole <class> <x> <y> <radius> <height>

inline SceneSpec load_scene_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open scene spec: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "scene v1")
    throw io_error("bad scene spec header: " + path);
  SceneSpec s;
  s.geometry = {{-4, -4, -4}, {4, 4, 4}, 16, 16, 16};
  s.embedding.dim = 8;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    bool ok = true;
    if (key == "grid_min")
      ok = bool(ss >> s.geometry.min_corner.x >> s.geometry.min_corner.y >>
                s.geometry.min_corner.z);
    else if (key == "grid_max")
      ok = bool(ss >> s.geometry.max_corner.x >> s.geometry.max_corner.y >>
                s.geometry.max_corner.z);
    else if (key == "resolution")
      ok = bool(ss >> s.geometry.nx >> s.geometry.ny >> s.geometry.nz);
    else if (key == "feature_dim")
      ok = bool(ss >> s.embedding.dim);
    else if (key == "prompts_per_class")
      ok = bool(ss >> s.embedding.prompts_per_class);
    else if (key == "min_class_angle_deg")
      ok = bool(ss >> s.embedding.min_class_angle_deg);
    else if (key == "min_intra_angle_deg")
      ok = bool(ss >> s.embedding.min_intra_angle_deg);
    else if (key == "cone_angle_deg")
      ok = bool(ss >> s.embedding.cone_angle_deg);
    else if (key == "intrinsic_dim")
      ok = bool(ss >> s.embedding.intrinsic_dim);
    else if (key == "cameras")
      ok = bool(ss >> s.n_cameras);
    else if (key == "orbit_radius")
      ok = bool(ss >> s.orbit_radius);
    else if (key == "orbit_height")
      ok = bool(ss >> s.orbit_height);
    else if (key == "orbit_tilt")
      ok = bool(ss >> s.orbit_tilt);
    else if (key == "image_size")
      ok = bool(ss >> s.image_width >> s.image_height);
    else if (key == "focal")
      ok = bool(ss >> s.focal);
    else if (key == "horizon")
      ok = bool(ss >> s.horizon);
    else if (key == "orbit_step_deg")
      ok = bool(ss >> s.orbit_step_deg);
    else if (key == "near")
      ok = bool(ss >> s.near);
    else if (key == "far")
      ok = bool(ss >> s.far);
    else if (key == "density_scale")
      ok = bool(ss >> s.density_scale);
    else if (key == "noise_std")
      ok = bool(ss >> s.target_noise_std);
    else if (key == "feature_jitter")
      ok = bool(ss >> s.feature_jitter);
    else if (key == "seed")
      ok = bool(ss >> s.seed);
    else if (key == "rgb") {
      int v = 1;
      ok = bool(ss >> v);
      s.with_rgb = v != 0;
    } else if (key == "primitive") {
      Primitive p;
      std::string shape;
      ok = bool(ss >> shape >> p.class_name);
      if (ok && shape == "box") {
        p.shape = Primitive::Shape::kBox;
        ok = bool(ss >> p.p0.x >> p.p0.y >> p.p0.z >> p.p1.x >> p.p1.y >>
                  p.p1.z);
      } else if (ok && shape == "sphere") {
        p.shape = Primitive::Shape::kSphere;
        ok = bool(ss >> p.p0.x >> p.p0.y >> p.p0.z >> p.r0);
      } else if (ok && shape == "plane") {
        p.shape = Primitive::Shape::kPlane;
        ok = bool(ss >> p.r0);
      } else if (ok && shape == "pole") {
        p.shape = Primitive::Shape::kPole;
        ok = bool(ss >> p.p0.x >> p.p0.y >> p.r0 >> p.r1);
      } else {
        throw io_error("unknown primitive shape in " + path);
      }
      if (ok) s.primitives.push_back(p);
    } else {
      throw io_error("unknown scene spec key '" + key + "' in " + path);
    }
    if (!ok) throw io_error("malformed scene spec line: " + line);
  }
  s.geometry.validate();
  return s;
}

inline FramePoseTrack make_orbit_track(const SceneSpec& spec) {
  Vec3 center = (spec.geometry.min_corner + spec.geometry.max_corner) * 0.5;
  FramePoseTrack track;
  for (int off = -spec.horizon; off <= spec.horizon; ++off) {
    FramePoseTrack::Frame frame;
    frame.offset = off;
    for (int i = 0; i < spec.n_cameras; ++i) {
      double theta = 2.0 * M_PI * i / spec.n_cameras +
                     off * spec.orbit_step_deg * M_PI / 180.0;
      Vec3 eye{center.x + spec.orbit_radius * std::cos(theta),
               center.y + spec.orbit_radius * std::sin(theta),
               center.z + spec.orbit_height +
                   spec.orbit_tilt * std::sin(theta)};
      CameraModel cam;
      cam.fx = cam.fy = spec.focal;
      cam.cx = spec.image_width / 2.0;
      cam.cy = spec.image_height / 2.0;
      cam.width = spec.image_width;
      cam.height = spec.image_height;
      cam.pose = look_at(eye, center);
      cam.validate();
      frame.cameras.push_back(cam);
    }
    track.frames.push_back(frame);
  }
  track.validate();
  return track;
}

inline std::vector<std::array<double, 3>> class_palette(int n) {
  // well separated colors; wraps after 8 classes
  static const std::array<double, 3> base[8] = {
      {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0},
      {1, 0, 1}, {0, 1, 1}, {1, 0.5, 0}, {0.5, 0.25, 1}};
  std::vector<std::array<double, 3>> out(n);
  for (int i = 0; i < n; ++i) out[i] = base[i % 8];
  return out;
}

// ---- oracle renderer ----
// Straightforward reference implementation of the sampling, trilinear
// interpolation and front-to-back accumulation, kept free of any calls
// into grid.hpp/renderer.hpp sampling or accumulation code. It exists to
// cross-check the production renderer and to produce ground truth target
// maps.

namespace oracle {

inline double interp_channel(const VoxelGrid& g, const Vec3& p, int channel,
                             bool density, bool rgb_channel) {
  // channel semantics: density ? sigmoid(logit) : feature[channel]
  const GridGeometry& geom = g.geometry;
  if (p.x < geom.min_corner.x || p.x > geom.max_corner.x ||
      p.y < geom.min_corner.y || p.y > geom.max_corner.y ||
      p.z < geom.min_corner.z || p.z > geom.max_corner.z)
    return 0.0;
  Vec3 vs = geom.voxel_size();
  double coords[3] = {(p.x - geom.min_corner.x) / vs.x - 0.5,
                      (p.y - geom.min_corner.y) / vs.y - 0.5,
                      (p.z - geom.min_corner.z) / vs.z - 0.5};
  int res[3] = {geom.nx, geom.ny, geom.nz};
  int lo[3];
  double fr[3];
  for (int a = 0; a < 3; ++a) {
    double f = std::floor(coords[a]);
    lo[a] = static_cast<int>(f);
    fr[a] = coords[a] - f;
  }
  double acc = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    int ijk[3];
    double w = 1.0;
    for (int a = 0; a < 3; ++a) {
      int bit = (corner >> a) & 1;
      int idx = lo[a] + bit;
      if (idx < 0) idx = 0;
      if (idx > res[a] - 1) idx = res[a] - 1;
      ijk[a] = idx;
      w *= bit ? fr[a] : (1.0 - fr[a]);
    }
    size_t flat = static_cast<size_t>(ijk[0]) +
                  static_cast<size_t>(res[0]) *
                      (static_cast<size_t>(ijk[1]) +
                       static_cast<size_t>(res[1]) * ijk[2]);
    double value;
    if (density)
      value = 1.0 / (1.0 + std::exp(-g.density_logits[flat]));
    else if (rgb_channel)
      value = g.rgb[flat * 3 + channel];
    else
      value = g.features[flat * g.feature_dim + channel];
    acc += w * value;
  }
  return acc;
}

struct PixelRender {
  std::vector<double> feature;
  double rgb[3] = {0, 0, 0};
  double depth = 0.0;
};

inline PixelRender render_pixel(const VoxelGrid& g, const CameraModel& cam,
                                double u, double v, double near, double far,
                                int n_samples, double density_scale = 1.0) {
  // Ray through the pixel; same pinhole model, written out locally.
  Vec3 dir_cam{(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0};
  Vec3 dir = cam.pose.rotation * dir_cam;
  dir = dir / std::sqrt(dot(dir, dir));
  Vec3 origin = cam.pose.translation;

  double step = (far - near) / (n_samples - 1);
  double last_delta = (far - near) / n_samples;
  PixelRender out;
  out.feature.assign(g.feature_dim, 0.0);
  double transmittance = 1.0;
  double wsum = 0.0, dsum = 0.0;
  for (int j = 0; j < n_samples; ++j) {
    double t = near + j * step;
    double delta = j + 1 < n_samples ? step : last_delta;
    Vec3 p = origin + t * dir;
    double sigma = density_scale * interp_channel(g, p, 0, true, false);
    double absorb = 1.0 - std::exp(-sigma * delta);
    double w = transmittance * absorb;
    if (w != 0.0) {
      for (int l = 0; l < g.feature_dim; ++l)
        out.feature[l] += w * interp_channel(g, p, l, false, false);
      if (g.has_rgb())
        for (int l = 0; l < 3; ++l)
          out.rgb[l] += w * interp_channel(g, p, l, false, true);
      wsum += w;
      dsum += w * t;
    }
    transmittance *= std::exp(-sigma * delta);
  }
  out.depth = dsum / std::max(wsum, 1e-10);
  return out;
}

inline FeatureMap render_map(const VoxelGrid& g, const CameraModel& cam,
                             double near, double far, int n_samples,
                             bool rgb = false, double density_scale = 1.0) {
  FeatureMap map = FeatureMap::zeros(cam.height, cam.width,
                                     rgb ? 3 : g.feature_dim);
  for (int row = 0; row < cam.height; ++row)
    for (int col = 0; col < cam.width; ++col) {
      PixelRender px = render_pixel(g, cam, col + 0.5, row + 0.5, near, far,
                                    n_samples, density_scale);
      double* dst = map.at(row, col);
      if (rgb)
        for (int l = 0; l < 3; ++l) dst[l] = px.rgb[l];
      else
        for (int l = 0; l < g.feature_dim; ++l) dst[l] = px.feature[l];
    }
  return map;
}

}  // namespace oracle

// Voxelizes the primitives, assigns class embeddings/colors and renders
// target maps for every (frame, camera) with the oracle renderer.
// Overlaps resolve to the later primitive with a warning on stderr.
inline GroundTruthBundle build_scene(const SceneSpec& spec,
                                     int n_target_samples = 192) {
  spec.geometry.validate();
  auto names = spec.class_names();
  if (names.empty() && !spec.primitives.empty())
    throw config_error("primitives without class names");

  GroundTruthBundle bundle;
  bundle.spec = spec;
  EmbeddingConfig ecfg = spec.embedding;
  ecfg.seed = mix_seed(spec.seed, 0x656d6264);
  if (!names.empty())
    bundle.vocabulary = make_synthetic_vocabulary(names, ecfg);
  else {
    bundle.vocabulary.dim = ecfg.dim;
  }

  const int L = ecfg.dim;
  VoxelGrid grid;
  grid.geometry = spec.geometry;
  grid.feature_dim = L;
  size_t n = spec.geometry.voxel_count();
  grid.density_logits.assign(n, -12.0);  // sigmoid ~ 6e-6: free space
  grid.features.assign(n * L, 0.0);
  if (spec.with_rgb) grid.rgb.assign(n * 3, 0.0);

  SemanticGrid sem;
  sem.geometry = spec.geometry;
  sem.class_count = static_cast<int>(names.size());
  sem.labels.assign(n, kFreeLabel);
  sem.scores.assign(n, 0.0);

  auto colors = class_palette(static_cast<int>(names.size()));
  bool warned_overlap = false;
  for (int z = 0; z < spec.geometry.nz; ++z)
    for (int y = 0; y < spec.geometry.ny; ++y)
      for (int x = 0; x < spec.geometry.nx; ++x) {
        Vec3 c = spec.geometry.voxel_center(x, y, z);
        size_t idx = spec.geometry.index(x, y, z);
        for (const auto& prim : spec.primitives) {
          if (!prim.contains(c, spec.geometry)) continue;
          if (sem.labels[idx] != kFreeLabel && !warned_overlap) {
            std::cerr << "build_scene: overlapping primitives, later one "
                         "wins\n";
            warned_overlap = true;
          }
          int ci = bundle.vocabulary.find_class(prim.class_name);
          sem.labels[idx] = ci;
          sem.scores[idx] = 1.0;
          grid.density_logits[idx] = 12.0;  // sigmoid ~ 0.999994: occupied
          const auto& emb = bundle.vocabulary.classes[ci].prompts[0].embedding;
          for (int l = 0; l < L; ++l) grid.features[idx * L + l] = emb[l];
          if (spec.with_rgb)
            for (int l = 0; l < 3; ++l)
              grid.rgb[idx * 3 + l] = colors[ci][l];
        }
      }

  if (spec.feature_jitter > 0.0) {
    Rng jitter_rng(mix_seed(spec.seed, 0x74657874));
    for (size_t idx = 0; idx < sem.labels.size(); ++idx) {
      if (sem.labels[idx] == kFreeLabel) continue;
      double* f = &grid.features[idx * L];
      double n2 = 0.0;
      for (int l = 0; l < L; ++l) {
        f[l] += spec.feature_jitter * jitter_rng.normal();
        n2 += f[l] * f[l];
      }
      double inv = 1.0 / std::sqrt(n2);
      for (int l = 0; l < L; ++l) f[l] *= inv;
    }
  }

  bundle.grid = std::move(grid);
  bundle.semantic = std::move(sem);
  bundle.track = make_orbit_track(spec);

  Rng noise_rng(mix_seed(spec.seed, 0x6e6f6973));
  for (const auto& frame : bundle.track.frames) {
    for (size_t ci = 0; ci < frame.cameras.size(); ++ci) {
      const CameraModel& cam = frame.cameras[ci];
      FeatureMap fm = oracle::render_map(bundle.grid, cam, spec.near, spec.far,
                                         n_target_samples, false,
                                         spec.density_scale);
      if (spec.target_noise_std > 0.0)
        for (auto& v : fm.data) v += spec.target_noise_std * noise_rng.normal();
      bundle.feature_targets[{frame.offset, static_cast<int>(ci)}] =
          std::move(fm);
      if (spec.with_rgb) {
        FeatureMap rm =
            oracle::render_map(bundle.grid, cam, spec.near, spec.far,
                               n_target_samples, true, spec.density_scale);
        if (spec.target_noise_std > 0.0)
          for (auto& v : rm.data)
            v += spec.target_noise_std * noise_rng.normal();
        bundle.rgb_targets[{frame.offset, static_cast<int>(ci)}] =
            std::move(rm);
      }
    }
  }
  return bundle;
}

}  // namespace fvr
