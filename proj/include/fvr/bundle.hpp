// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fvr/camera.hpp"
#include "fvr/core.hpp"
#include "fvr/feature_map.hpp"
#include "fvr/grid.hpp"
#include "fvr/inference.hpp"
#include "fvr/scene_synth.hpp"
#include "fvr/vocabulary.hpp"

namespace fvr {

inline uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot hash missing file: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

// Every written artifact carries a manifest alongside it: the config
// that produced it, the seed, and content hashes of the output files.
inline void write_manifest(const std::string& path, nlohmann::json config,
                           uint64_t seed,
                           const std::vector<std::string>& artifacts) {
  nlohmann::json m;
  m["config"] = std::move(config);
  m["seed"] = seed;
  nlohmann::json hashes = nlohmann::json::object();
  for (const auto& a : artifacts) {
    std::string name = std::filesystem::path(a).filename().string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(file_hash(a)));
    hashes[name] = buf;
  }
  m["hashes"] = hashes;
  std::ofstream out(path);
  if (!out) throw io_error("cannot write manifest: " + path);
  out << m.dump(2) << "\n";
}

inline std::string target_map_name(const char* prefix, int offset, int cam) {
  return std::string(prefix) + "_f" + std::to_string(offset) + "_c" +
         std::to_string(cam) + ".fvm";
}

// Bundle directory layout:
//   gt_grid.fvg, gt_sem.fvs, track.txt, vocab.txt,
//   feat_f<offset>_c<cam>.fvm [, rgb_f<offset>_c<cam>.fvm], manifest.json
inline void save_bundle(const GroundTruthBundle& bundle,
                        const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> artifacts;
  auto p = [&](const std::string& name) { return (fs::path(dir) / name).string(); };

  save_grid(bundle.grid, p("gt_grid.fvg"));
  artifacts.push_back(p("gt_grid.fvg"));
  save_semantic_grid(bundle.semantic, p("gt_sem.fvs"));
  artifacts.push_back(p("gt_sem.fvs"));
  save_track(bundle.track, p("track.txt"));
  artifacts.push_back(p("track.txt"));
  save_vocabulary(bundle.vocabulary, p("vocab.txt"));
  artifacts.push_back(p("vocab.txt"));
  for (const auto& [key, map] : bundle.feature_targets) {
    std::string name = target_map_name("feat", key.first, key.second);
    save_feature_map(map, p(name));
    artifacts.push_back(p(name));
  }
  for (const auto& [key, map] : bundle.rgb_targets) {
    std::string name = target_map_name("rgb", key.first, key.second);
    save_feature_map(map, p(name));
    artifacts.push_back(p(name));
  }

  const SceneSpec& s = bundle.spec;
  nlohmann::json cfg;
  cfg["resolution"] = {s.geometry.nx, s.geometry.ny, s.geometry.nz};
  cfg["grid_min"] = {s.geometry.min_corner.x, s.geometry.min_corner.y,
                     s.geometry.min_corner.z};
  cfg["grid_max"] = {s.geometry.max_corner.x, s.geometry.max_corner.y,
                     s.geometry.max_corner.z};
  cfg["feature_dim"] = s.embedding.dim;
  cfg["cameras"] = s.n_cameras;
  cfg["horizon"] = s.horizon;
  cfg["near"] = s.near;
  cfg["far"] = s.far;
  cfg["density_scale"] = s.density_scale;
  cfg["rgb"] = s.with_rgb;
  cfg["primitives"] = s.primitives.size();
  write_manifest(p("manifest.json"), cfg, s.seed, artifacts);
}

struct LoadedBundle {
  VoxelGrid gt_grid;
  SemanticGrid gt_semantic;
  FramePoseTrack track;
  Vocabulary vocabulary;
  std::map<std::pair<int, int>, FeatureMap> feature_targets;
  std::map<std::pair<int, int>, FeatureMap> rgb_targets;
  double near = 0.5, far = 0.0;
  double density_scale = 1.0;
};

inline LoadedBundle load_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  auto p = [&](const std::string& name) { return (fs::path(dir) / name).string(); };
  if (!fs::exists(p("manifest.json")))
    throw io_error("not a scene bundle (missing manifest.json): " + dir);
  LoadedBundle b;
  b.gt_grid = load_grid(p("gt_grid.fvg"));
  b.gt_semantic = load_semantic_grid(p("gt_sem.fvs"));
  b.track = load_track(p("track.txt"));
  b.vocabulary = load_vocabulary(p("vocab.txt"));
  std::ifstream mf(p("manifest.json"));
  nlohmann::json m = nlohmann::json::parse(mf);
  b.near = m["config"].value("near", 0.5);
  b.far = m["config"].value("far", 0.0);
  b.density_scale = m["config"].value("density_scale", 1.0);
  for (const auto& frame : b.track.frames) {
    for (size_t ci = 0; ci < frame.cameras.size(); ++ci) {
      std::string fname =
          p(target_map_name("feat", frame.offset, static_cast<int>(ci)));
      if (fs::exists(fname))
        b.feature_targets[{frame.offset, static_cast<int>(ci)}] =
            load_feature_map(fname);
      std::string rname =
          p(target_map_name("rgb", frame.offset, static_cast<int>(ci)));
      if (fs::exists(rname))
        b.rgb_targets[{frame.offset, static_cast<int>(ci)}] =
            load_feature_map(rname);
    }
  }
  if (b.feature_targets.empty())
    throw io_error("scene bundle has no feature target maps: " + dir);
  return b;
}

}  // namespace fvr
