// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "fvr/camera.hpp"
#include "fvr/core.hpp"
#include "fvr/grid.hpp"
#include "fvr/vocabulary.hpp"

namespace fvr {

constexpr int kFreeLabel = -1;

struct SemanticGrid {
  GridGeometry geometry;
  std::vector<int> labels;     // kFreeLabel or class index
  std::vector<double> scores;  // winning similarity, 0 for free voxels
  int class_count = 0;

  void validate() const {
    geometry.validate();
    if (labels.size() != geometry.voxel_count() ||
        scores.size() != geometry.voxel_count())
      throw domain_error("semantic grid shape mismatch");
    for (int l : labels)
      if (l != kFreeLabel && (l < 0 || l >= class_count))
        throw domain_error("semantic grid label out of range");
  }
};

struct RetrievalResult {
  GridGeometry geometry;
  std::vector<double> similarity;  // per voxel, in [-1, 1]
  std::vector<uint8_t> mask;       // empty unless a threshold was applied
};

namespace detail {
// Cosine between a voxel feature and a prepared unit query; zero-norm
// features score -1. raw_dot skips the voxel-side normalization.
inline double voxel_similarity(const double* feat, int L,
                               const std::vector<double>& unit_query,
                               bool raw_dot) {
  double d = 0.0, n2 = 0.0;
  for (int l = 0; l < L; ++l) {
    d += feat[l] * unit_query[l];
    n2 += feat[l] * feat[l];
  }
  if (raw_dot) return d;
  if (n2 < 1e-24) return -1.0;
  return d / std::sqrt(n2);
}
inline std::vector<double> unit_of(const std::vector<double>& q) {
  double n2 = 0.0;
  for (double x : q) n2 += x * x;
  if (n2 < 1e-24) throw domain_error("zero-norm query embedding");
  std::vector<double> u(q.size());
  double inv = 1.0 / std::sqrt(n2);
  for (size_t i = 0; i < q.size(); ++i) u[i] = q[i] * inv;
  return u;
}
}  // namespace detail

// Per-voxel similarity to one query embedding. Cosine by default; the
// raw dot product is kept behind a flag for fidelity experiments.
inline RetrievalResult retrieve(const VoxelGrid& grid,
                                const std::vector<double>& query,
                                double mask_threshold = 2.0,
                                bool raw_dot = false) {
  if (static_cast<int>(query.size()) != grid.feature_dim)
    throw config_error("retrieve: query dimension mismatch");
  std::vector<double> uq = detail::unit_of(query);
  RetrievalResult out;
  out.geometry = grid.geometry;
  size_t n = grid.geometry.voxel_count();
  out.similarity.resize(n);
  const int L = grid.feature_dim;
  for (size_t i = 0; i < n; ++i)
    out.similarity[i] =
        detail::voxel_similarity(&grid.features[i * L], L, uq, raw_dot);
  if (mask_threshold <= 1.0) {
    out.mask.resize(n);
    for (size_t i = 0; i < n; ++i)
      out.mask[i] = out.similarity[i] >= mask_threshold ? 1 : 0;
  }
  return out;
}

// Zero-shot semantic occupancy: free below the density threshold tau,
// otherwise the class of the single most similar prompt. Ties keep the
// earliest class/prompt in vocabulary order.
inline SemanticGrid segment(const VoxelGrid& grid, const Vocabulary& vocab,
                            double tau, bool raw_dot = false) {
  vocab.validate();
  if (vocab.dim != grid.feature_dim)
    throw config_error("segment: vocabulary dimension mismatch");
  SemanticGrid out;
  out.geometry = grid.geometry;
  out.class_count = static_cast<int>(vocab.classes.size());
  size_t n = grid.geometry.voxel_count();
  out.labels.assign(n, kFreeLabel);
  out.scores.assign(n, 0.0);

  std::vector<std::vector<double>> unit_prompts;
  std::vector<int> prompt_class;
  for (size_t ci = 0; ci < vocab.classes.size(); ++ci)
    for (const auto& p : vocab.classes[ci].prompts) {
      unit_prompts.push_back(detail::unit_of(p.embedding));
      prompt_class.push_back(static_cast<int>(ci));
    }

  const int L = grid.feature_dim;
  for (size_t i = 0; i < n; ++i) {
    if (sigmoid(grid.density_logits[i]) < tau) continue;
    double best = -std::numeric_limits<double>::infinity();
    int best_class = kFreeLabel;
    for (size_t q = 0; q < unit_prompts.size(); ++q) {
      double s = detail::voxel_similarity(&grid.features[i * L], L,
                                          unit_prompts[q], raw_dot);
      if (s > best) {
        best = s;
        best_class = prompt_class[q];
      }
    }
    out.labels[i] = best_class;
    out.scores[i] = best;
  }
  return out;
}

struct IouReport {
  double geometric_iou = 0.0;
  std::vector<double> per_class_iou;      // -1 marks an empty union
  std::vector<bool> class_in_gt;
  double miou = 0.0;                       // mean over classes present in gt
};

inline IouReport iou_miou(const SemanticGrid& pred, const SemanticGrid& gt,
                          int class_count) {
  if (pred.labels.size() != gt.labels.size())
    throw config_error("iou: grid size mismatch");
  IouReport rep;
  size_t occ_inter = 0, occ_union = 0;
  std::vector<size_t> inter(class_count, 0), uni(class_count, 0),
      in_gt(class_count, 0);
  for (size_t i = 0; i < pred.labels.size(); ++i) {
    bool po = pred.labels[i] != kFreeLabel;
    bool go = gt.labels[i] != kFreeLabel;
    if (po && go) ++occ_inter;
    if (po || go) ++occ_union;
    if (go) ++in_gt[gt.labels[i]];
    for (int c = 0; c < class_count; ++c) {
      bool pc = po && pred.labels[i] == c;
      bool gc = go && gt.labels[i] == c;
      if (pc && gc) ++inter[c];
      if (pc || gc) ++uni[c];
    }
  }
  rep.geometric_iou =
      occ_union == 0 ? 1.0
                     : static_cast<double>(occ_inter) / occ_union;
  rep.per_class_iou.resize(class_count);
  rep.class_in_gt.resize(class_count);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < class_count; ++c) {
    rep.class_in_gt[c] = in_gt[c] > 0;
    rep.per_class_iou[c] =
        uni[c] == 0 ? -1.0 : static_cast<double>(inter[c]) / uni[c];
    if (in_gt[c] > 0) {
      sum += std::max(0.0, rep.per_class_iou[c]);
      ++present;
    }
  }
  rep.miou = present == 0 ? 1.0 : sum / present;
  return rep;
}

// Occupied-voxel classification accuracy: over gt-occupied voxels, the
// fraction whose predicted label equals the gt label (free counts wrong).
inline double occupied_accuracy(const SemanticGrid& pred,
                                const SemanticGrid& gt) {
  if (pred.labels.size() != gt.labels.size())
    throw config_error("accuracy: grid size mismatch");
  size_t total = 0, correct = 0;
  for (size_t i = 0; i < pred.labels.size(); ++i) {
    if (gt.labels[i] == kFreeLabel) continue;
    ++total;
    if (pred.labels[i] == gt.labels[i]) ++correct;
  }
  return total == 0 ? 1.0 : static_cast<double>(correct) / total;
}

// Average precision over a ranked list: sort by descending score
// (ties keep input order), AP = mean over positives of precision at
// each positive's rank.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw config_error("average_precision: size mismatch");
  size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  size_t positives = 0;
  double ap_sum = 0.0;
  for (size_t rank = 0; rank < n; ++rank) {
    if (labels[order[rank]]) {
      ++positives;
      ap_sum += static_cast<double>(positives) / (rank + 1);
    }
  }
  if (positives == 0) return 0.0;
  return ap_sum / positives;
}

inline double mean_average_precision(
    const std::vector<std::vector<double>>& scores,
    const std::vector<std::vector<int>>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw config_error("mean_average_precision: bad query set");
  double sum = 0.0;
  for (size_t q = 0; q < scores.size(); ++q)
    sum += average_precision(scores[q], labels[q]);
  return sum / scores.size();
}

// Point visible iff it projects with positive depth inside some camera
// of some frame of the track.
inline std::vector<uint8_t> visible_mask(const std::vector<Vec3>& points,
                                         const FramePoseTrack& track) {
  track.validate();
  std::vector<uint8_t> mask(points.size(), 0);
  for (size_t i = 0; i < points.size(); ++i) {
    for (const auto& frame : track.frames) {
      for (const auto& cam : frame.cameras) {
        Vec3 local = cam.pose.rotation.transposed() *
                     (points[i] - cam.pose.translation);
        if (local.z <= 0.0) continue;
        double u = cam.fx * local.x / local.z + cam.cx;
        double v = cam.fy * local.y / local.z + cam.cy;
        if (u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height) {
          mask[i] = 1;
          break;
        }
      }
      if (mask[i]) break;
    }
  }
  return mask;
}

// ---- semantic grid file ----
// magic "FVRSEM1\0", u32 version, u32 X Y Z class_count, f64 corners,
// i32 labels (-1 free) then f32 scores, x-fastest.

inline void save_semantic_grid(const SemanticGrid& g, const std::string& path) {
  g.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open semantic grid for writing: " + path);
  const char magic[8] = {'F', 'V', 'R', 'S', 'E', 'M', '1', '\0'};
  detail::write_bytes(out, magic, 8);
  uint32_t header[5] = {1, static_cast<uint32_t>(g.geometry.nx),
                        static_cast<uint32_t>(g.geometry.ny),
                        static_cast<uint32_t>(g.geometry.nz),
                        static_cast<uint32_t>(g.class_count)};
  detail::write_bytes(out, header, 20);
  double corners[6] = {g.geometry.min_corner.x, g.geometry.min_corner.y,
                       g.geometry.min_corner.z, g.geometry.max_corner.x,
                       g.geometry.max_corner.y, g.geometry.max_corner.z};
  detail::write_bytes(out, corners, 48);
  std::vector<int32_t> labels(g.labels.begin(), g.labels.end());
  detail::write_bytes(out, labels.data(), labels.size() * 4);
  std::vector<float> scores(g.scores.begin(), g.scores.end());
  detail::write_bytes(out, scores.data(), scores.size() * 4);
  if (!out) throw io_error("failed writing semantic grid: " + path);
}

inline SemanticGrid load_semantic_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open semantic grid: " + path);
  char magic[8];
  detail::read_bytes(in, magic, 8, path);
  if (std::memcmp(magic, "FVRSEM1\0", 8) != 0)
    throw io_error("not a semantic grid file: " + path);
  uint32_t header[5];
  detail::read_bytes(in, header, 20, path);
  if (header[0] != 1)
    throw io_error("unsupported semantic grid version: " + path);
  SemanticGrid g;
  g.geometry.nx = static_cast<int>(header[1]);
  g.geometry.ny = static_cast<int>(header[2]);
  g.geometry.nz = static_cast<int>(header[3]);
  g.class_count = static_cast<int>(header[4]);
  double corners[6];
  detail::read_bytes(in, corners, 48, path);
  g.geometry.min_corner = {corners[0], corners[1], corners[2]};
  g.geometry.max_corner = {corners[3], corners[4], corners[5]};
  size_t n = g.geometry.voxel_count();
  std::vector<int32_t> labels(n);
  detail::read_bytes(in, labels.data(), n * 4, path);
  g.labels.assign(labels.begin(), labels.end());
  std::vector<float> scores(n);
  detail::read_bytes(in, scores.data(), n * 4, path);
  g.scores.assign(scores.begin(), scores.end());
  g.validate();
  return g;
}

}  // namespace fvr
