// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "fvr/inference.hpp"

using namespace fvr;

namespace {

VoxelGrid tiny_grid(int n, int L) {
  VoxelGrid g;
  g.geometry = {{0, 0, 0}, {double(n), double(n), double(n)}, n, n, n};
  g.feature_dim = L;
  g.density_logits.assign(g.geometry.voxel_count(), -10.0);
  g.features.assign(g.geometry.voxel_count() * L, 0.0);
  return g;
}

SemanticGrid make_sem(const GridGeometry& geom, std::vector<int> labels,
                      int class_count) {
  SemanticGrid s;
  s.geometry = geom;
  s.labels = std::move(labels);
  s.scores.assign(s.labels.size(), 0.0);
  s.class_count = class_count;
  return s;
}

}  // namespace

TEST_CASE("retrieval scores aligned voxels at one") {
  VoxelGrid g = tiny_grid(2, 3);
  // voxel 0 aligned with the query, voxel 1 anti-aligned, rest zero
  g.features[0] = 2.0;
  g.features[3] = -0.5;
  RetrievalResult r = retrieve(g, {1.0, 0.0, 0.0});
  CHECK(r.similarity[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(r.similarity[1] == Catch::Approx(-1.0).margin(1e-12));
  // zero-norm voxels score -1
  CHECK(r.similarity[2] == -1.0);
  CHECK(r.mask.empty());
}

TEST_CASE("retrieval mask applies the threshold") {
  VoxelGrid g = tiny_grid(2, 2);
  g.features[0] = 1.0;                      // cos = 1
  g.features[2] = 1.0; g.features[3] = 1.0; // cos = 1/sqrt(2)
  RetrievalResult r = retrieve(g, {1.0, 0.0}, 0.9);
  CHECK(r.mask.size() == g.geometry.voxel_count());
  CHECK(r.mask[0] == 1);
  CHECK(r.mask[1] == 0);
}

TEST_CASE("retrieval raw dot skips normalization") {
  VoxelGrid g = tiny_grid(2, 2);
  g.features[0] = 3.0;
  RetrievalResult r = retrieve(g, {2.0, 0.0}, 2.0, true);
  CHECK(r.similarity[0] == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("retrieval rejects mismatched or zero queries") {
  VoxelGrid g = tiny_grid(2, 2);
  CHECK_THROWS_AS(retrieve(g, {1.0, 0.0, 0.0}), config_error);
  CHECK_THROWS_AS(retrieve(g, {0.0, 0.0}), domain_error);
}

TEST_CASE("segmentation labels occupied voxels by nearest prompt") {
  VoxelGrid g = tiny_grid(2, 2);
  Vocabulary v;
  v.dim = 2;
  v.classes.push_back({"a", {{"a0", {1.0, 0.0}}}});
  v.classes.push_back({"b", {{"b0", {0.0, 1.0}}}});
  // occupied voxel 0 points at class b, voxel 1 at class a, rest free
  g.density_logits[0] = 10.0;
  g.features[0] = 0.1; g.features[1] = 0.9;
  g.density_logits[1] = 10.0;
  g.features[2] = 0.9; g.features[3] = 0.1;
  SemanticGrid s = segment(g, v, 0.5);
  CHECK(s.labels[0] == 1);
  CHECK(s.labels[1] == 0);
  for (size_t i = 2; i < s.labels.size(); ++i) CHECK(s.labels[i] == kFreeLabel);
  CHECK(s.scores[0] == Catch::Approx(0.9 / std::hypot(0.1, 0.9)).margin(1e-12));
}

TEST_CASE("segmentation ties keep the earliest class") {
  VoxelGrid g = tiny_grid(1, 2);
  Vocabulary v;
  v.dim = 2;
  v.classes.push_back({"first", {{"p", {1.0, 0.0}}}});
  v.classes.push_back({"second", {{"q", {1.0, 0.0}}}});
  g.density_logits[0] = 10.0;
  g.features[0] = 1.0;
  SemanticGrid s = segment(g, v, 0.5);
  CHECK(s.labels[0] == 0);
}

TEST_CASE("tau sweep monotonically shrinks occupancy") {
  VoxelGrid g = tiny_grid(3, 1);
  Rng rng(5);
  for (auto& x : g.density_logits) x = rng.uniform(-4.0, 4.0);
  for (auto& x : g.features) x = 1.0;
  Vocabulary v;
  v.dim = 1;
  v.classes.push_back({"only", {{"p", {1.0}}}});
  size_t prev = g.geometry.voxel_count() + 1;
  for (double tau : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    SemanticGrid s = segment(g, v, tau);
    size_t occ = 0;
    for (int l : s.labels) occ += l != kFreeLabel;
    CHECK(occ <= prev);
    prev = occ;
  }
}

TEST_CASE("toy iou example") {
  // two voxels; gt = [A, free], pred = [B, A]
  GridGeometry geom{{0, 0, 0}, {2, 1, 1}, 2, 1, 1};
  SemanticGrid gt = make_sem(geom, {0, kFreeLabel}, 2);
  SemanticGrid pred = make_sem(geom, {1, 0}, 2);
  IouReport rep = iou_miou(pred, gt, 2);
  CHECK(rep.geometric_iou == Catch::Approx(0.5).margin(1e-15));
  CHECK(rep.per_class_iou[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(rep.per_class_iou[1] == Catch::Approx(0.0).margin(1e-15));
  CHECK(rep.miou == Catch::Approx(0.0).margin(1e-15));
  CHECK(rep.class_in_gt[0]);
  CHECK_FALSE(rep.class_in_gt[1]);
}

TEST_CASE("perfect prediction scores one everywhere") {
  GridGeometry geom{{0, 0, 0}, {4, 1, 1}, 4, 1, 1};
  SemanticGrid gt = make_sem(geom, {0, 1, kFreeLabel, 1}, 2);
  IouReport rep = iou_miou(gt, gt, 2);
  CHECK(rep.geometric_iou == 1.0);
  CHECK(rep.miou == 1.0);
  CHECK(occupied_accuracy(gt, gt) == 1.0);
}

TEST_CASE("occupied accuracy counts free predictions as wrong") {
  GridGeometry geom{{0, 0, 0}, {4, 1, 1}, 4, 1, 1};
  SemanticGrid gt = make_sem(geom, {0, 0, 1, kFreeLabel}, 2);
  SemanticGrid pred = make_sem(geom, {0, kFreeLabel, 0, 1}, 2);
  CHECK(occupied_accuracy(pred, gt) == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("average precision hand examples") {
  // scores (0.9, 0.8, 0.7), labels (1, 0, 1): AP = (1 + 2/3)/2
  double ap = average_precision({0.9, 0.8, 0.7}, {1, 0, 1});
  CHECK(ap == Catch::Approx((1.0 + 2.0 / 3.0) / 2.0).margin(1e-12));
  CHECK(ap == Catch::Approx(0.8333333333).margin(1e-9));
  CHECK(average_precision({0.5, 0.4}, {1, 1}) == 1.0);
  CHECK(average_precision({0.5, 0.4}, {0, 0}) == 0.0);
  // ranking, not score scale, decides AP
  CHECK(average_precision({9.0, 8.0, 7.0}, {1, 0, 1}) == Catch::Approx(ap));
}

TEST_CASE("mean average precision averages over queries") {
  double m = mean_average_precision({{0.9, 0.8}, {0.9, 0.8}},
                                    {{1, 0}, {0, 1}});
  CHECK(m == Catch::Approx((1.0 + 0.5) / 2.0).margin(1e-12));
}

TEST_CASE("visibility mask matches a hand-placed camera") {
  FramePoseTrack track;
  FramePoseTrack::Frame frame;
  frame.offset = 0;
  CameraModel cam;
  cam.fx = cam.fy = 10;
  cam.cx = cam.cy = 5;
  cam.width = cam.height = 10;
  cam.pose = look_at({0, 0, 0}, {0, 0, 5});  // looking along +z
  frame.cameras.push_back(cam);
  track.frames.push_back(frame);
  std::vector<Vec3> pts{{0, 0, 5}, {0, 0, -5}, {100, 0, 5}};
  auto mask = visible_mask(pts, track);
  CHECK(mask[0] == 1);  // straight ahead
  CHECK(mask[1] == 0);  // behind the camera
  CHECK(mask[2] == 0);  // off the image
}

TEST_CASE("semantic grid file round trips") {
  GridGeometry geom{{-1, -1, -1}, {1, 1, 1}, 2, 3, 2};
  SemanticGrid s = make_sem(geom, std::vector<int>(12, kFreeLabel), 3);
  s.labels[0] = 2;
  s.scores[0] = 0.75;
  s.labels[5] = 0;
  s.scores[5] = 0.5;
  std::string path = "sem.fvs";
  save_semantic_grid(s, path);
  SemanticGrid loaded = load_semantic_grid(path);
  CHECK(loaded.class_count == 3);
  CHECK(loaded.labels == s.labels);
  CHECK(loaded.scores[0] == Catch::Approx(0.75).margin(1e-7));
  CHECK(loaded.geometry.min_corner.x == -1.0);
  std::remove(path.c_str());
}

TEST_CASE("semantic grid validation rejects bad labels") {
  GridGeometry geom{{0, 0, 0}, {1, 1, 1}, 1, 1, 1};
  SemanticGrid s = make_sem(geom, {7}, 2);
  CHECK_THROWS_AS(s.validate(), domain_error);
}
