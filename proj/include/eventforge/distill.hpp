#pragma once

#include <cmath>
#include <vector>

#include "eventforge/core.hpp"
#include "eventforge/geometry.hpp"

namespace eventforge {

// Source (rgb) and target (event) rigs; `extrinsic` maps rgb-camera points
// into the event-camera frame.
struct RigPair {
  StereoRig rgb;
  StereoRig event;
  Pose extrinsic;

  bool valid() const {
    return rgb.valid() && event.valid() && extrinsic.is_rotation();
  }
};

struct DistillOptions {
  double z_min = 0.5;   // metres, applied in the source frame
  double z_max = 100.0;
};

// Per-target-pixel candidate depths, for auditing the z-buffer.
struct DistillDebug {
  int width = 0, height = 0;
  std::vector<std::vector<double>> candidates;

  const std::vector<double>& at(int x, int y) const {
    return candidates[static_cast<size_t>(y) * width + x];
  }
};

// Lifts source disparity to depth, clips, transforms each pixel into the
// event camera, splats onto the nearest integer pixel with a min-depth
// z-buffer, and converts back to target disparity.
inline DisparityMap reproject_labels(const DisparityMap& d_rgb,
                                     const RigPair& rigs,
                                     const DistillOptions& options = {},
                                     DistillDebug* debug = nullptr) {
  if (!rigs.valid()) throw UsageError("reproject_labels: invalid rig pair");
  if (d_rgb.width() != rigs.rgb.camera.width ||
      d_rgb.height() != rigs.rgb.camera.height)
    throw UsageError("reproject_labels: disparity size mismatch");
  if (!(options.z_min > 0.0 && options.z_max > options.z_min))
    throw UsageError("reproject_labels: bad depth clip range");

  const CameraModel& cam_e = rigs.event.camera;
  GridD zbuf(cam_e.width, cam_e.height,
             std::numeric_limits<double>::infinity());
  if (debug) {
    debug->width = cam_e.width;
    debug->height = cam_e.height;
    debug->candidates.assign(
        static_cast<size_t>(cam_e.width) * cam_e.height, {});
  }

  for (int y = 0; y < d_rgb.height(); ++y) {
    for (int x = 0; x < d_rgb.width(); ++x) {
      const double d = d_rgb.at(x, y);
      if (!is_valid(d) || !(d > kDivEps)) continue;
      const double z = rigs.rgb.baseline * rigs.rgb.camera.fx / d;
      if (z < options.z_min || z > options.z_max) continue;
      const Vec3 p = backproject(Vec2(x, y), z, rigs.rgb.camera);
      const auto uv = project(transform(rigs.extrinsic, p), cam_e);
      if (!uv) continue;
      const long xi = std::lround(uv->x);
      const long yi = std::lround(uv->y);
      if (xi < 0 || xi >= cam_e.width || yi < 0 || yi >= cam_e.height)
        continue;
      if (debug)
        debug->candidates[static_cast<size_t>(yi) * cam_e.width + xi]
            .push_back(uv->z);
      double& slot = zbuf.at(static_cast<int>(xi), static_cast<int>(yi));
      slot = std::min(slot, uv->z);
    }
  }

  DisparityMap out(cam_e.width, cam_e.height, kInvalid);
  for (int y = 0; y < cam_e.height; ++y)
    for (int x = 0; x < cam_e.width; ++x) {
      const double z = zbuf.at(x, y);
      if (std::isfinite(z))
        out.at(x, y) = rigs.event.baseline * cam_e.fx / z;
    }
  return out;
}

// Shortcut for co-located, identical rigs.
inline DisparityMap identity_transfer(const DisparityMap& d_rgb) {
  return d_rgb;
}

inline bool rigs_are_identical(const RigPair& rigs, double tol = 1e-12) {
  const CameraModel& a = rigs.rgb.camera;
  const CameraModel& b = rigs.event.camera;
  const bool same_cam = a.width == b.width && a.height == b.height &&
                        std::abs(a.fx - b.fx) <= tol &&
                        std::abs(a.fy - b.fy) <= tol &&
                        std::abs(a.cx - b.cx) <= tol &&
                        std::abs(a.cy - b.cy) <= tol;
  const bool same_baseline =
      std::abs(rigs.rgb.baseline - rigs.event.baseline) <= tol;
  const bool identity_ext =
      (rigs.extrinsic.rotation - Mat3::Identity()).norm() <= tol &&
      rigs.extrinsic.translation.norm() <= tol;
  return same_cam && same_baseline && identity_ext;
}

}  // namespace eventforge
