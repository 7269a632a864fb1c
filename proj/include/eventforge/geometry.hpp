#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <optional>

#include "eventforge/core.hpp"

namespace eventforge {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rigid transform [R | t] mapping points into the parent frame.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return Pose{}; }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
  }

  Pose compose(const Pose& rhs) const {
    Pose out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  bool is_rotation(double tol = 1e-6) const {
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity())
                             .norm();
    return ortho < tol && rotation.determinant() > 0.0;
  }
};

// Pinhole intrinsics. Pixel (0,0) is the center of the top-left pixel.
struct CameraModel {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 &&
           std::isfinite(cx) && std::isfinite(cy);
  }
};

// Rectified pair: both eyes share the camera model, separated by `baseline`
// metres along the camera x axis.
struct StereoRig {
  CameraModel camera;
  double baseline = 0.0;

  bool valid() const { return camera.valid() && baseline > 0.0; }
};

using DepthMap = GridD;
using DisparityMap = GridD;

struct ImagePoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline Vec3 transform(const Pose& pose, const Vec3& p) {
  return pose.rotation * p + pose.translation;
}

// Camera-frame point for pixel u at planar depth z.
inline Vec3 backproject(const Vec2& u, double z, const CameraModel& cam) {
  if (!cam.valid()) throw UsageError("backproject: invalid camera model");
  if (!(z > 0.0)) throw UsageError("backproject: depth must be positive");
  if (u.x() < -0.5 || u.x() > cam.width - 0.5 || u.y() < -0.5 ||
      u.y() > cam.height - 0.5)
    throw UsageError("backproject: pixel out of bounds");
  return Vec3((u.x() - cam.cx) / cam.fx * z, (u.y() - cam.cy) / cam.fy * z, z);
}

// nullopt signals a point at or behind the camera plane.
inline std::optional<ImagePoint> project(const Vec3& p,
                                         const CameraModel& cam) {
  if (!cam.valid()) throw UsageError("project: invalid camera model");
  if (!(p.z() > 0.0)) return std::nullopt;
  ImagePoint out;
  out.x = cam.fx * p.x() / p.z() + cam.cx;
  out.y = cam.fy * p.y() / p.z() + cam.cy;
  out.z = p.z();
  return out;
}

inline double disparity_to_depth_value(double d, double baseline, double fx) {
  if (!(d > kDivEps)) return kInvalid;
  return baseline * fx / d;
}

inline double depth_to_disparity_value(double z, double baseline, double fx) {
  if (!(z > kDivEps)) return kInvalid;
  return baseline * fx / z;
}

inline DepthMap disparity_to_depth(const DisparityMap& d,
                                   const StereoRig& rig) {
  if (!rig.valid()) throw UsageError("disparity_to_depth: invalid rig");
  DepthMap out(d.width(), d.height());
  for (size_t i = 0; i < d.data().size(); ++i)
    out.data()[i] =
        disparity_to_depth_value(d.data()[i], rig.baseline, rig.camera.fx);
  return out;
}

inline DisparityMap depth_to_disparity(const DepthMap& z,
                                       const StereoRig& rig) {
  if (!rig.valid()) throw UsageError("depth_to_disparity: invalid rig");
  DisparityMap out(z.width(), z.height());
  for (size_t i = 0; i < z.data().size(); ++i)
    out.data()[i] =
        depth_to_disparity_value(z.data()[i], rig.baseline, rig.camera.fx);
  return out;
}

// Nearest rotation in the Frobenius sense (polar factor via SVD).
inline Mat3 reorthogonalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(2) < 1e-12)
    throw DataError("reorthogonalize: matrix is rank deficient");
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

}  // namespace eventforge
