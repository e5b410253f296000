// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fvr/core.hpp"

namespace fvr {

struct Pose {
  Mat3 rotation;     // camera -> world
  Vec3 translation;  // camera origin in world coordinates
};

struct CameraModel {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Pose pose;

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0))
      throw domain_error("camera focal lengths must be positive");
    if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height))
      throw domain_error("camera principal point must lie inside the image");
    if (orthonormality_error(pose.rotation) > 1e-9 ||
        std::abs(pose.rotation.det() - 1.0) > 1e-9)
      throw domain_error("camera rotation is not a proper rotation matrix");
  }
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit norm
  double u = 0.0, v = 0.0;
  int frame_index = 0;
  int camera_index = 0;
};

// Cameras per temporal offset. Offset 0 is the supervised frame.
struct FramePoseTrack {
  struct Frame {
    int offset = 0;
    std::vector<CameraModel> cameras;
  };
  std::vector<Frame> frames;  // strictly increasing offsets

  void validate() const {
    if (frames.empty()) throw domain_error("pose track is empty");
    bool has_zero = false;
    for (size_t i = 0; i < frames.size(); ++i) {
      if (i > 0 && frames[i].offset <= frames[i - 1].offset)
        throw domain_error("pose track offsets must be strictly increasing");
      if (frames[i].offset == 0) has_zero = true;
      if (frames[i].cameras.empty())
        throw domain_error("pose track frame has no cameras");
    }
    if (!has_zero) throw domain_error("pose track must contain offset 0");
  }

  const Frame* find(int offset) const {
    for (const auto& f : frames)
      if (f.offset == offset) return &f;
    return nullptr;
  }
  int max_abs_offset() const {
    int m = 0;
    for (const auto& f : frames) m = std::max(m, std::abs(f.offset));
    return m;
  }
};

// (u, v) are real valued; integer + 0.5 is the pixel center.
inline Ray pixel_to_ray(const CameraModel& cam, double u, double v) {
  if (!(u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height))
    throw domain_error("pixel coordinate out of image bounds");
  Vec3 dir_cam{(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0};
  Ray r;
  r.origin = cam.pose.translation;
  r.direction = normalized(cam.pose.rotation * dir_cam);
  r.u = u;
  r.v = v;
  return r;
}

// Rays uniform over (frame offset within horizon) x camera x pixel.
inline std::vector<Ray> sample_ray_batch(const FramePoseTrack& track,
                                         size_t n_rays, int horizon,
                                         uint64_t rng_seed) {
  track.validate();
  if (n_rays < 1) throw domain_error("n_rays must be >= 1");
  std::vector<const FramePoseTrack::Frame*> eligible;
  for (const auto& f : track.frames)
    if (std::abs(f.offset) <= horizon) eligible.push_back(&f);
  if (eligible.empty())
    throw domain_error("horizon excludes every frame in the track");

  Rng rng(rng_seed);
  std::vector<Ray> rays;
  rays.reserve(n_rays);
  for (size_t i = 0; i < n_rays; ++i) {
    const auto* frame = eligible[rng.uniform_index(eligible.size())];
    int ci = static_cast<int>(rng.uniform_index(frame->cameras.size()));
    const CameraModel& cam = frame->cameras[ci];
    double u = rng.uniform(0.0, static_cast<double>(cam.width));
    double v = rng.uniform(0.0, static_cast<double>(cam.height));
    // uniform() < 1 keeps u strictly below width, same for v.
    Ray r = pixel_to_ray(cam, u, v);
    r.frame_index = frame->offset;
    r.camera_index = ci;
    rays.push_back(r);
  }
  return rays;
}

// ---- track file ----
//
// Line oriented text:
//   track v1
//   frame <offset>
//   cam <fx> <fy> <cx> <cy> <width> <height> <r00 .. r22 tx ty tz>
// Pose numbers are the row-major 3x4 [R|t] camera-to-world transform.

inline void save_track(const FramePoseTrack& track, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open track file for writing: " + path);
  out << "track v1\n";
  char buf[64];
  for (const auto& f : track.frames) {
    out << "frame " << f.offset << "\n";
    for (const auto& c : f.cameras) {
      out << "cam";
      auto emit = [&](double x) {
        std::snprintf(buf, sizeof buf, " %.17g", x);
        out << buf;
      };
      emit(c.fx);
      emit(c.fy);
      emit(c.cx);
      emit(c.cy);
      out << " " << c.width << " " << c.height;
      for (int r = 0; r < 3; ++r) {
        for (int col = 0; col < 3; ++col) emit(c.pose.rotation(r, col));
        emit(c.pose.translation[r]);
      }
      out << "\n";
    }
  }
}

inline FramePoseTrack load_track(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open track file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "track v1")
    throw io_error("bad track file header: " + path);
  FramePoseTrack track;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "frame") {
      FramePoseTrack::Frame f;
      if (!(ss >> f.offset)) throw io_error("bad frame line in " + path);
      track.frames.push_back(f);
    } else if (tag == "cam") {
      if (track.frames.empty())
        throw io_error("cam line before any frame in " + path);
      CameraModel c;
      if (!(ss >> c.fx >> c.fy >> c.cx >> c.cy >> c.width >> c.height))
        throw io_error("bad cam line in " + path);
      for (int r = 0; r < 3; ++r) {
        for (int col = 0; col < 3; ++col)
          if (!(ss >> c.pose.rotation(r, col)))
            throw io_error("bad cam pose in " + path);
        if (!(ss >> c.pose.translation[r]))
          throw io_error("bad cam pose in " + path);
      }
      c.validate();  // rejects non-orthonormal rotations
      track.frames.back().cameras.push_back(c);
    } else {
      throw io_error("unknown track line '" + tag + "' in " + path);
    }
  }
  track.validate();
  return track;
}

// Look-at pose with world +z up; image v grows opposite to up.
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = {0, 0, 1}) {
  Vec3 z = normalized(target - eye);
  Vec3 xv = cross(z, up);
  if (norm(xv) < 1e-12) xv = cross(z, Vec3{0, 1, 0});
  Vec3 x = normalized(xv);
  Vec3 y = cross(z, x);
  Pose p;
  for (int r = 0; r < 3; ++r) {
    p.rotation(r, 0) = x[r];
    p.rotation(r, 1) = y[r];
    p.rotation(r, 2) = z[r];
  }
  p.translation = eye;
  return p;
}

}  // namespace fvr
