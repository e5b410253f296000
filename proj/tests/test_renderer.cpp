// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fvr/gradcheck.hpp"
#include "fvr/renderer.hpp"
#include "fvr/scene_synth.hpp"

using namespace fvr;

namespace {

Ray unit_ray(Vec3 origin, Vec3 dir) {
  Ray r;
  r.origin = origin;
  r.direction = normalized(dir);
  return r;
}

VoxelGrid constant_grid(int n, int L, double density, double feature_value) {
  VoxelGrid g;
  g.geometry = {{0, 0, 0}, {double(n), double(n), double(n)}, n, n, n};
  g.feature_dim = L;
  double lgt = std::log(density / (1.0 - density));
  g.density_logits.assign(g.geometry.voxel_count(), lgt);
  g.features.assign(g.geometry.voxel_count() * L, feature_value);
  return g;
}

}  // namespace

TEST_CASE("uniform samples span [near, far]") {
  Ray r = unit_ray({0, 0, 0}, {0, 0, 1});
  RaySamples s = make_samples(r, 0.5, 40.0, 100);
  REQUIRE(s.ts.size() == 100);
  CHECK(s.ts.front() == 0.5);
  CHECK(s.ts.back() == 40.0);
  double spacing = 39.5 / 99.0;
  for (int j = 0; j + 1 < 100; ++j) {
    CHECK(s.deltas[j] == Catch::Approx(spacing).margin(1e-12));
    CHECK(s.ts[j + 1] > s.ts[j]);
  }
  CHECK(s.deltas[99] == Catch::Approx(39.5 / 100.0).margin(1e-12));
  CHECK(spacing == Catch::Approx(0.399).margin(1e-3));
}

TEST_CASE("two-sample endpoint convention") {
  Ray r = unit_ray({0, 0, 0}, {0, 0, 1});
  RaySamples s = make_samples(r, 0.0, 1.0, 2);
  CHECK(s.ts[0] == 0.0);
  CHECK(s.ts[1] == 1.0);
  CHECK(s.deltas[0] == 1.0);
  CHECK(s.deltas[1] == 0.5);  // (far - near) / n
}

TEST_CASE("stratified samples stay in their bins and reproduce") {
  Ray r = unit_ray({0, 0, 0}, {1, 0, 0});
  RaySamples a = make_samples(r, 2.0, 10.0, 16, SampleMode::kStratified, 77);
  RaySamples b = make_samples(r, 2.0, 10.0, 16, SampleMode::kStratified, 77);
  double bin = 8.0 / 16.0;
  for (int j = 0; j < 16; ++j) {
    CHECK(a.ts[j] >= 2.0 + j * bin);
    CHECK(a.ts[j] < 2.0 + (j + 1) * bin);
    CHECK(a.ts[j] == b.ts[j]);
  }
}

TEST_CASE("invalid sample ranges rejected") {
  Ray r = unit_ray({0, 0, 0}, {0, 0, 1});
  CHECK_THROWS_AS(make_samples(r, 1.0, 1.0, 10), domain_error);
  CHECK_THROWS_AS(make_samples(r, 2.0, 1.0, 10), domain_error);
  CHECK_THROWS_AS(make_samples(r, 0.0, 1.0, 1), domain_error);
}

TEST_CASE("empty space renders to nothing") {
  VoxelGrid g = constant_grid(4, 3, 1e-9, 0.5);
  g.density_logits.assign(g.density_logits.size(), -40.0);
  Ray r = unit_ray({2, 2, -1}, {0, 0, 1});
  RenderOutput out = render_ray(g, make_samples(r, 0.0, 6.0, 32));
  for (double w : out.weights) CHECK(w == Catch::Approx(0.0).margin(1e-15));
  for (double f : out.feature) CHECK(f == Catch::Approx(0.0).margin(1e-15));
  CHECK(out.transmittance_end == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("single sample closed form") {
  VoxelGrid g = constant_grid(4, 1, 0.5, 2.0);
  // sigma = 1 via density_scale 2 on the 0.5 field
  RaySamples s;
  s.ts = {2.0};
  s.deltas = {1.0};
  s.positions = {{2.0, 2.0, 2.0}};
  RenderOutput out = render_ray(g, s, 2.0);
  double w = 1.0 - std::exp(-1.0);
  CHECK(out.weights[0] == Catch::Approx(w).margin(1e-12));
  CHECK(out.transmittance_end == Catch::Approx(std::exp(-1.0)).margin(1e-12));
  CHECK(out.feature[0] == Catch::Approx(w * 2.0).margin(1e-12));
  CHECK(out.expected_depth == Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("homogeneous two-sample weights") {
  VoxelGrid g = constant_grid(6, 1, 0.5, 1.0);
  RaySamples s;
  s.ts = {1.0, 2.0};
  s.deltas = {1.0, 1.0};
  s.positions = {{3, 3, 1}, {3, 3, 2}};
  RenderOutput out = render_ray(g, s);
  double e = std::exp(-0.5);
  CHECK(out.weights[0] == Catch::Approx(1.0 - e).epsilon(1e-12));
  CHECK(out.weights[1] == Catch::Approx(e * (1.0 - e)).epsilon(1e-12));
}

TEST_CASE("weights telescope with end transmittance") {
  Rng rng(101);
  VoxelGrid g = constant_grid(4, 2, 0.5, 0.0);
  for (auto& x : g.density_logits) x = rng.uniform(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    Ray r = unit_ray({rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0), -0.5},
                     {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 1.0});
    RenderOutput out = render_ray(g, make_samples(r, 0.0, 6.0, 50));
    double sum = 0.0;
    for (double w : out.weights) {
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(std::abs(sum + out.transmittance_end - 1.0) < 1e-9);
  }
}

TEST_CASE("raising density never lowers total opacity") {
  VoxelGrid lo = constant_grid(4, 1, 0.3, 1.0);
  VoxelGrid hi = constant_grid(4, 1, 0.6, 1.0);
  Ray r = unit_ray({2, 2, -1}, {0.1, 0.0, 1.0});
  auto s = make_samples(r, 0.0, 7.0, 40);
  RenderOutput a = render_ray(lo, s);
  RenderOutput b = render_ray(hi, s);
  double sa = 0.0, sb = 0.0;
  for (double w : a.weights) sa += w;
  for (double w : b.weights) sb += w;
  CHECK(sb >= sa);
}

TEST_CASE("saturated ray reproduces a constant feature field") {
  VoxelGrid g = constant_grid(8, 2, 0.95, 0.0);
  for (size_t i = 0; i < g.geometry.voxel_count(); ++i) {
    g.features[i * 2] = 1.25;
    g.features[i * 2 + 1] = -0.5;
  }
  Ray r = unit_ray({4, 4, 0.5}, {0, 1, 0});
  RenderOutput out = render_ray(g, make_samples(r, 0.0, 7.0, 200), 4.0);
  REQUIRE(out.transmittance_end < 1e-6);
  CHECK(out.feature[0] == Catch::Approx(1.25).margin(1e-6));
  CHECK(out.feature[1] == Catch::Approx(-0.5).margin(1e-6));
}

TEST_CASE("zero upstream gradient leaves the grid gradient untouched") {
  VoxelGrid g = constant_grid(3, 2, 0.4, 0.3);
  GridGradient grad = GridGradient::zeros_like(g);
  Ray r = unit_ray({1.5, 1.5, -0.2}, {0, 0, 1});
  auto s = make_samples(r, 0.0, 4.0, 16);
  std::vector<double> zero(2, 0.0);
  render_ray_backward(g, s, zero.data(), nullptr, grad);
  for (double x : grad.d_density_logits) CHECK(x == 0.0);
  for (double x : grad.d_features) CHECK(x == 0.0);
}

TEST_CASE("single-sample density gradient closed form") {
  VoxelGrid g = constant_grid(4, 1, 0.5, 2.0);
  RaySamples s;
  s.ts = {2.0};
  s.deltas = {1.5};
  // voxel center: gradient lands on one logit only
  s.positions = {g.geometry.voxel_center(1, 2, 2)};
  GridGradient grad = GridGradient::zeros_like(g);
  double up = 1.0;
  render_ray_backward(g, s, &up, nullptr, grad);
  // dPsi/dsigma = delta * exp(-sigma*delta) * psi, chained through
  // sigmoid'(0) = 0.25 at the single corner
  double sigma = 0.5, delta = 1.5, psi = 2.0;
  double expected = delta * std::exp(-sigma * delta) * psi * 0.25;
  size_t idx = g.geometry.index(1, 2, 2);
  CHECK(grad.d_density_logits[idx] == Catch::Approx(expected).epsilon(1e-10));
  CHECK(grad.d_features[idx] ==
        Catch::Approx((1.0 - std::exp(-sigma * delta)) * up).epsilon(1e-10));
}

TEST_CASE("analytic gradients match finite differences") {
  GradCheckConfig cfg;
  cfg.grid_res = 4;
  cfg.feature_dim = 3;
  cfg.n_rays = 1;
  cfg.n_samples = 8;
  cfg.seed = 3;
  GradCheckResult res = run_gradcheck(cfg);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("feature map of an empty grid is zero") {
  VoxelGrid g = constant_grid(4, 2, 0.5, 1.0);
  g.density_logits.assign(g.density_logits.size(), -40.0);
  CameraModel cam;
  cam.fx = cam.fy = 10;
  cam.cx = cam.cy = 4;
  cam.width = cam.height = 8;
  cam.pose = look_at({2, 2, -6}, {2, 2, 2});
  RenderedMaps maps = render_feature_map(g, cam, 0.5, 12.0, 40);
  for (double v : maps.feature.data) CHECK(v == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("opaque slab produces the expected depth") {
  VoxelGrid g = constant_grid(8, 1, 1e-6, 1.0);
  // slab at z in [4, 5): voxel layer index 4
  for (int z = 4; z < 5; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        g.density_logits[g.geometry.index(x, y, z)] = 40.0;
  CameraModel cam;
  cam.fx = cam.fy = 20;
  cam.cx = cam.cy = 4;
  cam.width = cam.height = 8;
  cam.pose = look_at({4, 4, -4}, {4, 4, 4});
  RenderedMaps maps = render_feature_map(g, cam, 0.5, 16.0, 160, 8.0);
  double delta = 15.5 / 159.0;
  // slab voxel centers are at z=4.5, camera at z=-4: distance 8.5
  double center_depth = maps.depth.at(4, 4)[0];
  CHECK(std::abs(center_depth - 8.5) < 2.5 * delta + 0.5);
}

TEST_CASE("renderer agrees with the independent oracle") {
  Rng rng(7);
  VoxelGrid g = constant_grid(5, 3, 0.5, 0.0);
  for (auto& x : g.density_logits) x = rng.uniform(-3.0, 3.0);
  for (auto& x : g.features) x = rng.uniform(-1.0, 1.0);
  CameraModel cam;
  cam.fx = cam.fy = 12;
  cam.cx = cam.cy = 5;
  cam.width = cam.height = 10;
  cam.pose = look_at({2.5, 2.5, -5}, {2.5, 2.5, 2.5});
  RenderedMaps got = render_feature_map(g, cam, 0.5, 14.0, 64);
  FeatureMap want = oracle::render_map(g, cam, 0.5, 14.0, 64);
  REQUIRE(got.feature.data.size() == want.data.size());
  for (size_t i = 0; i < want.data.size(); ++i)
    CHECK(std::abs(got.feature.data[i] - want.data[i]) < 1e-12);
}
