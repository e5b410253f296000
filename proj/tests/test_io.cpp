// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fvr/bundle.hpp"
#include "fvr/scene_synth.hpp"

using namespace fvr;
namespace fs = std::filesystem;

namespace {

SceneSpec bundle_spec() {
  SceneSpec s;
  s.geometry = {{-4, -4, -4}, {4, 4, 4}, 6, 6, 6};
  s.embedding.dim = 4;
  s.n_cameras = 2;
  s.image_width = s.image_height = 8;
  s.focal = 7.0;
  s.horizon = 1;
  s.seed = 13;
  Primitive box;
  box.shape = Primitive::Shape::kBox;
  box.class_name = "crate";
  box.p0 = {-2, -2, -2};
  box.p1 = {2, 2, 2};
  s.primitives.push_back(box);
  return s;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("feature map file round trips exactly at f32") {
  FeatureMap m = FeatureMap::zeros(3, 4, 2);
  Rng rng(2);
  for (auto& x : m.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  std::string path = "map_io.fvm";
  save_feature_map(m, path);
  FeatureMap loaded = load_feature_map(path);
  CHECK(loaded.height == 3);
  CHECK(loaded.width == 4);
  CHECK(loaded.channels == 2);
  CHECK(loaded.data == m.data);  // values were f32-representable
  std::remove(path.c_str());
}

TEST_CASE("corrupt magic is rejected") {
  std::string path = "bad_magic.fvm";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTAFILE" << std::string(64, '\0');
  }
  CHECK_THROWS_AS(load_feature_map(path), io_error);
  CHECK_THROWS_AS(load_grid(path), io_error);
  CHECK_THROWS_AS(load_semantic_grid(path), io_error);
  std::remove(path.c_str());
}

TEST_CASE("truncated files are rejected") {
  VoxelGrid g = VoxelGrid::create({{0, 0, 0}, {1, 1, 1}, 2, 2, 2}, 2);
  std::string path = "trunc.fvg";
  save_grid(g, path);
  auto full = fs::file_size(path);
  fs::resize_file(path, full / 2);
  CHECK_THROWS_AS(load_grid(path), io_error);
  std::remove(path.c_str());
}

TEST_CASE("vocabulary text file round trips") {
  EmbeddingConfig cfg;
  cfg.dim = 6;
  cfg.prompts_per_class = 2;
  cfg.cone_angle_deg = 10;
  cfg.min_intra_angle_deg = 5;
  cfg.seed = 4;
  Vocabulary v = make_synthetic_vocabulary({"cat", "dog"}, cfg);
  std::string path = "vocab_io.txt";
  save_vocabulary(v, path);
  Vocabulary loaded = load_vocabulary(path);
  REQUIRE(loaded.classes.size() == 2);
  CHECK(loaded.dim == 6);
  for (size_t c = 0; c < 2; ++c) {
    CHECK(loaded.classes[c].name == v.classes[c].name);
    REQUIRE(loaded.classes[c].prompts.size() == 2);
    for (size_t p = 0; p < 2; ++p)
      for (int l = 0; l < 6; ++l)
        CHECK(loaded.classes[c].prompts[p].embedding[l] ==
              v.classes[c].prompts[p].embedding[l]);  // %.17g is lossless
  }
  std::remove(path.c_str());
}

TEST_CASE("scene bundle directory round trips") {
  TempDir tmp("fvr_bundle_io");
  GroundTruthBundle b = build_scene(bundle_spec(), 24);
  save_bundle(b, tmp.path.string());

  CHECK(fs::exists(tmp.path / "manifest.json"));
  CHECK(fs::exists(tmp.path / "gt_grid.fvg"));
  CHECK(fs::exists(tmp.path / "feat_f-1_c0.fvm"));
  CHECK(fs::exists(tmp.path / "rgb_f1_c1.fvm"));

  LoadedBundle loaded = load_bundle(tmp.path.string());
  CHECK(loaded.gt_grid.feature_dim == 4);
  CHECK(loaded.gt_semantic.class_count == 1);
  CHECK(loaded.track.frames.size() == 3);
  CHECK(loaded.vocabulary.classes.size() == 1);
  CHECK(loaded.feature_targets.size() == 6);
  CHECK(loaded.rgb_targets.size() == 6);
  CHECK(loaded.near == 2.0);
  CHECK(loaded.far == 18.0);
  // labels survive exactly, maps at f32 precision
  CHECK(loaded.gt_semantic.labels == b.semantic.labels);
  const auto& orig = b.feature_targets.at({0, 0}).data;
  const auto& back = loaded.feature_targets.at({0, 0}).data;
  REQUIRE(orig.size() == back.size());
  for (size_t i = 0; i < orig.size(); ++i)
    CHECK(back[i] == Catch::Approx(orig[i]).margin(1e-6));
}

TEST_CASE("manifest records config, seed and content hashes") {
  TempDir tmp("fvr_bundle_manifest");
  GroundTruthBundle b = build_scene(bundle_spec(), 16);
  save_bundle(b, tmp.path.string());
  std::ifstream in(tmp.path / "manifest.json");
  nlohmann::json m = nlohmann::json::parse(in);
  CHECK(m["seed"] == 13);
  CHECK(m["config"]["feature_dim"] == 4);
  CHECK(m["config"]["cameras"] == 2);
  REQUIRE(m.contains("hashes"));
  std::string h = m["hashes"]["gt_grid.fvg"];
  CHECK(h.size() == 16);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(
                    file_hash((tmp.path / "gt_grid.fvg").string())));
  CHECK(h == buf);
}

TEST_CASE("loading a non-bundle directory fails cleanly") {
  TempDir tmp("fvr_not_a_bundle");
  fs::create_directories(tmp.path);
  CHECK_THROWS_AS(load_bundle(tmp.path.string()), io_error);
}

TEST_CASE("identical synthesis produces identical bundle bytes") {
  TempDir a("fvr_bundle_a"), c("fvr_bundle_c");
  save_bundle(build_scene(bundle_spec(), 16), a.path.string());
  save_bundle(build_scene(bundle_spec(), 16), c.path.string());
  for (const auto& entry : fs::directory_iterator(a.path)) {
    std::string name = entry.path().filename().string();
    CHECK(file_hash(entry.path().string()) ==
          file_hash((c.path / name).string()));
  }
}
