// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fvr/core.hpp"
#include "fvr/grid.hpp"

namespace fvr {

// H x W x L image of target (or rendered) feature vectors, row-major,
// channels contiguous per pixel.
struct FeatureMap {
  int height = 0, width = 0, channels = 0;
  std::vector<double> data;

  static FeatureMap zeros(int h, int w, int l) {
    FeatureMap m;
    m.height = h;
    m.width = w;
    m.channels = l;
    m.data.assign(static_cast<size_t>(h) * w * l, 0.0);
    return m;
  }

  double* at(int row, int col) {
    return &data[(static_cast<size_t>(row) * width + col) * channels];
  }
  const double* at(int row, int col) const {
    return &data[(static_cast<size_t>(row) * width + col) * channels];
  }

  void validate() const {
    if (height < 1 || width < 1 || channels < 1)
      throw domain_error("feature map dimensions must be >= 1");
    if (data.size() != static_cast<size_t>(height) * width * channels)
      throw domain_error("feature map data shape mismatch");
  }
};

// Bilinear lookup at real-valued (u, v), pixel-center convention
// (texel i covers [i, i+1), its value sits at i + 0.5). Border texels
// clamp.
inline void target_feature(const FeatureMap& map, double u, double v,
                           double* out) {
  if (!(u >= 0.0 && u < map.width && v >= 0.0 && v < map.height))
    throw domain_error("target feature lookup outside map bounds");
  auto split = [](double t, int n, int idx[2], double w[2]) {
    double x = t - 0.5;
    double f = std::floor(x);
    int i0 = static_cast<int>(f);
    double frac = x - f;
    idx[0] = std::min(std::max(i0, 0), n - 1);
    idx[1] = std::min(std::max(i0 + 1, 0), n - 1);
    w[0] = 1.0 - frac;
    w[1] = frac;
  };
  int iu[2], iv[2];
  double wu[2], wv[2];
  split(u, map.width, iu, wu);
  split(v, map.height, iv, wv);
  const int L = map.channels;
  std::fill(out, out + L, 0.0);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double* px = map.at(iv[b], iu[a]);
      double w = wu[a] * wv[b];
      for (int l = 0; l < L; ++l) out[l] += w * px[l];
    }
}

inline std::vector<double> target_feature(const FeatureMap& map, double u,
                                          double v) {
  std::vector<double> out(map.channels);
  target_feature(map, u, v, out.data());
  return out;
}

// ---- feature map file ----
// magic "FVRFMAP1", u32 version, u32 H W L, f32 row-major.

inline void save_feature_map(const FeatureMap& map, const std::string& path) {
  map.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open feature map for writing: " + path);
  const char magic[8] = {'F', 'V', 'R', 'F', 'M', 'A', 'P', '1'};
  detail::write_bytes(out, magic, 8);
  uint32_t header[4] = {1, static_cast<uint32_t>(map.height),
                        static_cast<uint32_t>(map.width),
                        static_cast<uint32_t>(map.channels)};
  detail::write_bytes(out, header, 16);
  detail::write_f32_array(out, map.data);
  if (!out) throw io_error("failed writing feature map: " + path);
}

inline FeatureMap load_feature_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open feature map: " + path);
  char magic[8];
  detail::read_bytes(in, magic, 8, path);
  if (std::memcmp(magic, "FVRFMAP1", 8) != 0)
    throw io_error("not a feature map file: " + path);
  uint32_t header[4];
  detail::read_bytes(in, header, 16, path);
  if (header[0] != 1) throw io_error("unsupported feature map version: " + path);
  FeatureMap m;
  m.height = static_cast<int>(header[1]);
  m.width = static_cast<int>(header[2]);
  m.channels = static_cast<int>(header[3]);
  size_t n = static_cast<size_t>(m.height) * m.width * m.channels;
  detail::read_f32_array(in, m.data, n, path);
  m.validate();
  return m;
}

}  // namespace fvr
