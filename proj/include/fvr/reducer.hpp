// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "fvr/core.hpp"
#include "fvr/feature_map.hpp"
#include "fvr/optimizer.hpp"

namespace fvr {

// Shared-weight linear autoencoder: encode t -> normalize(t U),
// decode t' -> normalize(t' U^T). U is L x L' row-major.
struct Reducer {
  int source_dim = 0;  // L
  int target_dim = 0;  // L'
  std::vector<double> u;  // source_dim * target_dim

  double at(int row, int col) const { return u[row * target_dim + col]; }

  void validate() const {
    if (source_dim < 1 || target_dim < 1 || target_dim > source_dim)
      throw domain_error("reducer needs 1 <= L' <= L");
    if (u.size() != static_cast<size_t>(source_dim) * target_dim)
      throw domain_error("reducer matrix shape mismatch");
  }

  // max_ij |(U^T U - I)_ij|, reported as a diagnostic
  double orthogonality_error() const {
    double worst = 0.0;
    for (int i = 0; i < target_dim; ++i)
      for (int j = 0; j < target_dim; ++j) {
        double s = 0.0;
        for (int k = 0; k < source_dim; ++k) s += at(k, i) * at(k, j);
        worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
      }
    return worst;
  }
};

namespace detail {
constexpr double kReducerEps = 1e-12;
}

inline std::vector<double> encode(const Reducer& r,
                                  const std::vector<double>& t) {
  if (static_cast<int>(t.size()) != r.source_dim)
    throw domain_error("encode: input dimension mismatch");
  std::vector<double> a(r.target_dim, 0.0);
  for (int i = 0; i < r.source_dim; ++i) {
    double ti = t[i];
    const double* row = &r.u[i * r.target_dim];
    for (int k = 0; k < r.target_dim; ++k) a[k] += ti * row[k];
  }
  double n2 = 0.0;
  for (double x : a) n2 += x * x;
  if (n2 < detail::kReducerEps * detail::kReducerEps)
    throw domain_error("encode: degenerate projection (norm below 1e-12)");
  double inv = 1.0 / std::sqrt(n2);
  for (auto& x : a) x *= inv;
  return a;
}

inline std::vector<double> decode(const Reducer& r,
                                  const std::vector<double>& tp) {
  if (static_cast<int>(tp.size()) != r.target_dim)
    throw domain_error("decode: input dimension mismatch");
  std::vector<double> b(r.source_dim, 0.0);
  for (int i = 0; i < r.source_dim; ++i) {
    const double* row = &r.u[i * r.target_dim];
    double s = 0.0;
    for (int k = 0; k < r.target_dim; ++k) s += tp[k] * row[k];
    b[i] = s;
  }
  double n2 = 0.0;
  for (double x : b) n2 += x * x;
  if (n2 < detail::kReducerEps * detail::kReducerEps)
    throw domain_error("decode: degenerate projection (norm below 1e-12)");
  double inv = 1.0 / std::sqrt(n2);
  for (auto& x : b) x *= inv;
  return b;
}

struct ReducerTrainResult {
  Reducer reducer;
  double final_loss = 0.0;       // mean arccos, radians
  double orthogonality_error = 0.0;
  int normalized_inputs = 0;     // prompts that were not unit norm
  std::vector<double> loss_curve;
};

// Minimizes mean arccos(t_i . reconstruct(t_i)) over the prompt set with
// the arccos argument clamped to [-1+1e-7, 1-1e-7] (the gradient diverges
// at the endpoints).
inline ReducerTrainResult train_reducer(
    std::vector<std::vector<double>> prompts, int target_dim, int steps = 3000,
    double lr = 3e-3, uint64_t seed = 0) {
  if (prompts.empty()) throw domain_error("train_reducer: no prompts");
  const int L = static_cast<int>(prompts[0].size());
  if (target_dim < 1 || target_dim > L)
    throw domain_error("train_reducer: need 1 <= L' <= L");

  ReducerTrainResult result;
  for (auto& t : prompts) {
    if (static_cast<int>(t.size()) != L)
      throw domain_error("train_reducer: ragged prompt dimensions");
    double n2 = 0.0;
    for (double x : t) n2 += x * x;
    if (n2 < 1e-20) throw domain_error("train_reducer: zero-norm prompt");
    if (std::abs(n2 - 1.0) > 1e-9) {
      double inv = 1.0 / std::sqrt(n2);
      for (auto& x : t) x *= inv;
      ++result.normalized_inputs;
    }
  }
  if (result.normalized_inputs > 0)
    std::cerr << "train_reducer: normalized " << result.normalized_inputs
              << " non-unit prompt(s)\n";

  Reducer r;
  r.source_dim = L;
  r.target_dim = target_dim;
  r.u.resize(static_cast<size_t>(L) * target_dim);
  Rng rng(mix_seed(seed, 0x72656475));
  const double scale = 1.0 / std::sqrt(static_cast<double>(L));
  for (auto& x : r.u) x = rng.uniform(-scale, scale);

  const double clamp_lo = -1.0 + 1e-7, clamp_hi = 1.0 - 1e-7;
  const int n = static_cast<int>(prompts.size());
  std::vector<double> grad(r.u.size());
  AdamState adam = AdamState::zeros(r.u.size());

  auto epoch = [&](bool with_grad) {
    if (with_grad) std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    std::vector<double> a(target_dim), tprime(target_dim), b(L), that(L);
    for (const auto& t : prompts) {
      // forward: a = tU, t' = a/|a|, b = t'U^T, that = b/|b|
      std::fill(a.begin(), a.end(), 0.0);
      for (int i = 0; i < L; ++i) {
        const double* row = &r.u[i * target_dim];
        for (int k = 0; k < target_dim; ++k) a[k] += t[i] * row[k];
      }
      double na = 0.0;
      for (double x : a) na += x * x;
      na = std::sqrt(std::max(na, 1e-300));
      for (int k = 0; k < target_dim; ++k) tprime[k] = a[k] / na;
      double nb = 0.0;
      for (int i = 0; i < L; ++i) {
        const double* row = &r.u[i * target_dim];
        double s = 0.0;
        for (int k = 0; k < target_dim; ++k) s += tprime[k] * row[k];
        b[i] = s;
        nb += s * s;
      }
      nb = std::sqrt(std::max(nb, 1e-300));
      for (int i = 0; i < L; ++i) that[i] = b[i] / nb;
      double c = 0.0;
      for (int i = 0; i < L; ++i) c += t[i] * that[i];
      double cc = std::min(clamp_hi, std::max(clamp_lo, c));
      loss += std::acos(cc);
      if (!with_grad) continue;

      double dc = (c > clamp_lo && c < clamp_hi)
                      ? -1.0 / std::sqrt(1.0 - cc * cc)
                      : 0.0;
      // g_b = dc * (t - c*that)/|b|
      std::vector<double> g_b(L);
      for (int i = 0; i < L; ++i) g_b[i] = dc * (t[i] - c * that[i]) / nb;
      // decoder path: dU[i][k] += g_b[i] * t'[k]
      // encoder path through t': g_tp[k] = sum_i g_b[i] U[i][k]
      std::vector<double> g_tp(target_dim, 0.0);
      for (int i = 0; i < L; ++i) {
        double* grow = &grad[i * target_dim];
        const double* row = &r.u[i * target_dim];
        for (int k = 0; k < target_dim; ++k) {
          grow[k] += g_b[i] * tprime[k];
          g_tp[k] += g_b[i] * row[k];
        }
      }
      // g_a = (I - t' t'^T) g_tp / |a|
      double tp_dot = 0.0;
      for (int k = 0; k < target_dim; ++k) tp_dot += tprime[k] * g_tp[k];
      std::vector<double> g_a(target_dim);
      for (int k = 0; k < target_dim; ++k)
        g_a[k] = (g_tp[k] - tp_dot * tprime[k]) / na;
      // dU[i][k] += t[i] * g_a[k]
      for (int i = 0; i < L; ++i) {
        double* grow = &grad[i * target_dim];
        for (int k = 0; k < target_dim; ++k) grow[k] += t[i] * g_a[k];
      }
    }
    if (with_grad)
      for (auto& g : grad) g /= n;
    return loss / n;
  };

  for (int step = 0; step < steps; ++step) {
    double loss = epoch(true);
    result.loss_curve.push_back(loss);
    // arccos' diverges at perfect reconstruction, so a constant step
    // size leaves an oscillation floor; cosine decay removes it.
    double lr_t =
        lr * 0.5 * (1.0 + std::cos(M_PI * step / std::max(1, steps)));
    adam_update(r.u, grad, adam, lr_t);
  }
  result.final_loss = epoch(false);
  result.orthogonality_error = r.orthogonality_error();
  result.reducer = std::move(r);
  return result;
}

struct ReduceMapResult {
  FeatureMap map;
  int zero_norm_pixels = 0;
};

// encode() applied per pixel; zero-norm pixels become zero vectors.
inline ReduceMapResult reduce_feature_map(const Reducer& r,
                                          const FeatureMap& in) {
  if (in.channels != r.source_dim)
    throw config_error("reduce_feature_map: channel dimension mismatch");
  ReduceMapResult out;
  out.map = FeatureMap::zeros(in.height, in.width, r.target_dim);
  std::vector<double> px(r.source_dim);
  for (int row = 0; row < in.height; ++row)
    for (int col = 0; col < in.width; ++col) {
      const double* p = in.at(row, col);
      double n2 = 0.0;
      for (int l = 0; l < r.source_dim; ++l) {
        px[l] = p[l];
        n2 += p[l] * p[l];
      }
      if (n2 < detail::kReducerEps) {
        ++out.zero_norm_pixels;
        continue;
      }
      std::vector<double> enc = encode(r, px);
      double* q = out.map.at(row, col);
      for (int l = 0; l < r.target_dim; ++l) q[l] = enc[l];
    }
  return out;
}

// ---- reducer file ----
// magic "FVRRED1\0", u32 version, u32 L L', f32 row-major U.

inline void save_reducer(const Reducer& r, const std::string& path) {
  r.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open reducer file for writing: " + path);
  const char magic[8] = {'F', 'V', 'R', 'R', 'E', 'D', '1', '\0'};
  detail::write_bytes(out, magic, 8);
  uint32_t header[3] = {1, static_cast<uint32_t>(r.source_dim),
                        static_cast<uint32_t>(r.target_dim)};
  detail::write_bytes(out, header, 12);
  detail::write_f32_array(out, r.u);
  if (!out) throw io_error("failed writing reducer file: " + path);
}

inline Reducer load_reducer(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open reducer file: " + path);
  char magic[8];
  detail::read_bytes(in, magic, 8, path);
  if (std::memcmp(magic, "FVRRED1\0", 8) != 0)
    throw io_error("not a reducer file: " + path);
  uint32_t header[3];
  detail::read_bytes(in, header, 12, path);
  if (header[0] != 1) throw io_error("unsupported reducer version: " + path);
  Reducer r;
  r.source_dim = static_cast<int>(header[1]);
  r.target_dim = static_cast<int>(header[2]);
  detail::read_f32_array(in, r.u,
                         static_cast<size_t>(r.source_dim) * r.target_dim,
                         path);
  r.validate();
  return r;
}

}  // namespace fvr
