// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fvr/core.hpp"
#include "fvr/grid.hpp"

namespace fvr {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t t = 0;

  static AdamState zeros(size_t n) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    return s;
  }
};

// One Adam update with bias correction. The step counter lives in the
// state and must be advanced exactly once per batch via `begin_step`.
inline void adam_step(std::vector<double>& params,
                      const std::vector<double>& grads, AdamState& state,
                      double lr, const AdamConfig& cfg = {}) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw config_error("adam: parameter/gradient/state size mismatch");
  if (state.t < 1) throw config_error("adam: begin_step not called");
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

inline void adam_begin_step(AdamState& state) { ++state.t; }

// Convenience wrapper advancing the counter and updating in one call.
inline void adam_update(std::vector<double>& params,
                        const std::vector<double>& grads, AdamState& state,
                        double lr, const AdamConfig& cfg = {}) {
  adam_begin_step(state);
  adam_step(params, grads, state, lr, cfg);
}

// Optimizer state for a whole grid (density + features + optional rgb).
struct GridOptimizerState {
  AdamState density;
  AdamState features;
  AdamState rgb;

  static GridOptimizerState zeros_like(const VoxelGrid& g) {
    GridOptimizerState s;
    s.density = AdamState::zeros(g.density_logits.size());
    s.features = AdamState::zeros(g.features.size());
    s.rgb = AdamState::zeros(g.rgb.size());
    return s;
  }
};

// ---- optimizer state file (checkpoint companion to the grid file) ----
// magic "FVROPT1\0", u32 version, i64 t, u64 sizes, f64 arrays.

inline void save_optimizer_state(const GridOptimizerState& s,
                                 const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open optimizer state for writing: " + path);
  const char magic[8] = {'F', 'V', 'R', 'O', 'P', 'T', '1', '\0'};
  detail::write_bytes(out, magic, 8);
  uint32_t version = 1;
  detail::write_bytes(out, &version, 4);
  auto dump = [&](const AdamState& a) {
    int64_t t = a.t;
    uint64_t n = a.m.size();
    detail::write_bytes(out, &t, 8);
    detail::write_bytes(out, &n, 8);
    detail::write_bytes(out, a.m.data(), n * 8);
    detail::write_bytes(out, a.v.data(), n * 8);
  };
  dump(s.density);
  dump(s.features);
  dump(s.rgb);
  if (!out) throw io_error("failed writing optimizer state: " + path);
}

inline GridOptimizerState load_optimizer_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open optimizer state: " + path);
  char magic[8];
  detail::read_bytes(in, magic, 8, path);
  if (std::memcmp(magic, "FVROPT1\0", 8) != 0)
    throw io_error("not an optimizer state file: " + path);
  uint32_t version = 0;
  detail::read_bytes(in, &version, 4, path);
  if (version != 1)
    throw io_error("unsupported optimizer state version: " + path);
  GridOptimizerState s;
  auto slurp = [&](AdamState& a) {
    int64_t t = 0;
    uint64_t n = 0;
    detail::read_bytes(in, &t, 8, path);
    detail::read_bytes(in, &n, 8, path);
    a.t = t;
    a.m.resize(n);
    a.v.resize(n);
    detail::read_bytes(in, a.m.data(), n * 8, path);
    detail::read_bytes(in, a.v.data(), n * 8, path);
  };
  slurp(s.density);
  slurp(s.features);
  slurp(s.rgb);
  return s;
}

}  // namespace fvr
