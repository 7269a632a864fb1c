#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "eventforge/core.hpp"
#include "eventforge/geometry.hpp"

namespace eventforge {

// Axis-aligned cube with premultiplied-free opacity and RGB albedo.
struct Voxel {
  Vec3 center = Vec3::Zero();
  double size = 0.0;
  double alpha = 0.0;
  Vec3 color = Vec3::Zero();
};

struct SparseVoxelScene {
  std::vector<Voxel> voxels;

  void validate() const {
    for (size_t i = 0; i < voxels.size(); ++i) {
      const Voxel& v = voxels[i];
      if (!(v.size > 0.0))
        throw DataError("voxel " + std::to_string(i) + ": size must be > 0");
      if (!(v.alpha >= 0.0 && v.alpha <= 1.0))
        throw DataError("voxel " + std::to_string(i) +
                        ": alpha outside [0,1]");
      for (int c = 0; c < 3; ++c)
        if (!(v.color[c] >= 0.0 && v.color[c] <= 1.0))
          throw DataError("voxel " + std::to_string(i) +
                          ": color outside [0,1]");
      if (!v.center.allFinite())
        throw DataError("voxel " + std::to_string(i) + ": non-finite center");
    }
  }
};

struct RenderOptions {
  double min_transmittance = 1e-4;  // early ray termination
  bool invert_size_term = false;    // flip the size factor of C_Vsize
};

struct RenderOutput {
  Image color;        // composited RGB
  GridD depth;        // expected entry depth, NaN where the ray hits nothing
  GridD conf_ao;      // normalized sum T*alpha^2
  GridD conf_vsize;   // normalized sum T*size, gated by the hole factor
  GridD residual;     // transmittance left after compositing
  GridD acc_alpha;    // raw sum T*alpha
  GridD raw_ao;       // raw sum T*alpha^2
  GridD raw_size;     // raw sum T*size
};

namespace detail {

struct BvhNode {
  Vec3 lo, hi;
  int right = -1;  // internal: right child (left child is the next node)
  int first = 0;   // leaf: range into order
  int count = 0;
};

class VoxelBvh {
 public:
  explicit VoxelBvh(const std::vector<Voxel>& voxels) : voxels_(&voxels) {
    order_.resize(voxels.size());
    for (size_t i = 0; i < voxels.size(); ++i) order_[i] = static_cast<int>(i);
    if (!voxels.empty()) build(0, static_cast<int>(voxels.size()));
  }

  // Appends (entry depth along dir's z-parametrization, voxel index) pairs.
  void intersect(const Vec3& origin, const Vec3& dir,
                 std::vector<std::pair<double, int>>& hits) const {
    if (nodes_.empty()) return;
    int stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const int ni = stack[--top];
      const BvhNode& node = nodes_[ni];
      double t0, t1;
      if (!slab_test(origin, dir, node.lo, node.hi, t0, t1)) continue;
      if (node.right < 0) {
        for (int k = 0; k < node.count; ++k) {
          const int idx = order_[node.first + k];
          const Voxel& v = (*voxels_)[idx];
          const double h = 0.5 * v.size;
          const Vec3 lo = v.center - Vec3::Constant(h);
          const Vec3 hi = v.center + Vec3::Constant(h);
          double te, tx;
          if (slab_test(origin, dir, lo, hi, te, tx) && tx > 0.0)
            hits.emplace_back(std::max(te, 0.0), idx);
        }
      } else {
        stack[top++] = ni + 1;
        stack[top++] = node.right;
      }
    }
  }

 private:
  static bool slab_test(const Vec3& o, const Vec3& d, const Vec3& lo,
                        const Vec3& hi, double& t_enter, double& t_exit) {
    t_enter = -std::numeric_limits<double>::infinity();
    t_exit = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      const double da = d[a];
      if (std::abs(da) < 1e-300) {
        if (o[a] < lo[a] || o[a] > hi[a]) return false;
        continue;
      }
      double ta = (lo[a] - o[a]) / da;
      double tb = (hi[a] - o[a]) / da;
      if (ta > tb) std::swap(ta, tb);
      t_enter = std::max(t_enter, ta);
      t_exit = std::min(t_exit, tb);
      if (t_enter > t_exit) return false;
    }
    return true;
  }

  int build(int first, int count) {
    BvhNode node;
    node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    node.hi = Vec3::Constant(-std::numeric_limits<double>::infinity());
    for (int k = 0; k < count; ++k) {
      const Voxel& v = (*voxels_)[order_[first + k]];
      const double h = 0.5 * v.size;
      node.lo = node.lo.cwiseMin((v.center.array() - h).matrix());
      node.hi = node.hi.cwiseMax((v.center.array() + h).matrix());
    }
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (count <= 4) {
      nodes_[self].first = first;
      nodes_[self].count = count;
      return self;
    }
    int axis = 0;
    const Vec3 extent = node.hi - node.lo;
    if (extent.y() > extent.x()) axis = 1;
    if (extent.z() > extent[axis]) axis = 2;
    const int mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid,
                     order_.begin() + first + count, [&](int a, int b) {
                       const double ca = (*voxels_)[a].center[axis];
                       const double cb = (*voxels_)[b].center[axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    build(first, mid - first);
    nodes_[self].right = build(mid, first + count - mid);
    return self;
  }

  const std::vector<Voxel>* voxels_;
  std::vector<int> order_;
  std::vector<BvhNode> nodes_;
};

// (x - min) / (max - min) over pixels flagged valid; constant images and
// invalid pixels go to 0.
inline GridD normalize_minmax(const GridD& raw,
                              const std::vector<uint8_t>& valid) {
  GridD out(raw.width(), raw.height(), 0.0);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < raw.data().size(); ++i) {
    if (!valid[i]) continue;
    lo = std::min(lo, raw.data()[i]);
    hi = std::max(hi, raw.data()[i]);
  }
  if (!(hi > lo)) return out;
  const double scale = 1.0 / (hi - lo);
  for (size_t i = 0; i < raw.data().size(); ++i)
    if (valid[i]) out.data()[i] = (raw.data()[i] - lo) * scale;
  return out;
}

}  // namespace detail

// Front-to-back alpha compositing of every voxel the pixel ray intersects,
// ordered by entry depth. Per-voxel depth is the ray's camera-frame z at the
// entry point.
inline RenderOutput render(const SparseVoxelScene& scene, const Pose& pose,
                           const CameraModel& cam,
                           const RenderOptions& options = {}) {
  if (!cam.valid()) throw UsageError("render: invalid camera model");
  scene.validate();

  RenderOutput out;
  out.color = Image(cam.width, cam.height, 3);
  out.depth = GridD(cam.width, cam.height, kInvalid);
  out.residual = GridD(cam.width, cam.height, 1.0);
  out.acc_alpha = GridD(cam.width, cam.height, 0.0);
  out.raw_ao = GridD(cam.width, cam.height, 0.0);
  out.raw_size = GridD(cam.width, cam.height, 0.0);

  const detail::VoxelBvh bvh(scene.voxels);
  std::vector<uint8_t> valid(out.depth.data().size(), 0);
  std::vector<std::pair<double, int>> hits;

  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      // Direction with unit z so the ray parameter equals camera depth.
      const Vec3 dir_cam((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
      const Vec3 dir = pose.rotation * dir_cam;
      hits.clear();
      bvh.intersect(pose.translation, dir, hits);
      if (hits.empty()) continue;
      std::sort(hits.begin(), hits.end());

      double transmittance = 1.0;
      double acc_alpha = 0.0, ao = 0.0, vsize = 0.0, depth = 0.0;
      Vec3 color = Vec3::Zero();
      for (const auto& [t_entry, idx] : hits) {
        const Voxel& v = scene.voxels[idx];
        const double w = transmittance * v.alpha;
        color += w * v.color;
        depth += w * t_entry;
        acc_alpha += w;
        ao += transmittance * v.alpha * v.alpha;
        vsize += transmittance * v.size;
        transmittance *= 1.0 - v.alpha;
        if (transmittance < options.min_transmittance) break;
      }

      const size_t i = static_cast<size_t>(y) * cam.width + x;
      valid[i] = 1;
      for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = color[c];
      out.depth.at(x, y) = depth;
      out.residual.at(x, y) = transmittance;
      out.acc_alpha.at(x, y) = acc_alpha;
      out.raw_ao.at(x, y) = ao;
      out.raw_size.at(x, y) = vsize;
    }
  }

  out.conf_ao = detail::normalize_minmax(out.raw_ao, valid);
  GridD size_term = detail::normalize_minmax(out.raw_size, valid);
  if (options.invert_size_term) {
    for (size_t i = 0; i < size_term.data().size(); ++i)
      if (valid[i]) size_term.data()[i] = 1.0 - size_term.data()[i];
  }
  const GridD hole = detail::normalize_minmax(out.acc_alpha, valid);
  out.conf_vsize = GridD(cam.width, cam.height, 0.0);
  for (size_t i = 0; i < size_term.data().size(); ++i)
    out.conf_vsize.data()[i] = size_term.data()[i] * hole.data()[i];
  return out;
}

struct FlowField {
  GridD dx, dy;
};

// Image-space displacement of each pixel when the camera moves from
// `pose_from` to `pose_to`, induced by the rendered depth.
inline FlowField flow_from_depth(const DepthMap& depth, const Pose& pose_from,
                                 const Pose& pose_to, const CameraModel& cam) {
  if (!cam.valid()) throw UsageError("flow_from_depth: invalid camera model");
  if (depth.width() != cam.width || depth.height() != cam.height)
    throw UsageError("flow_from_depth: depth size mismatch");
  FlowField flow{GridD(cam.width, cam.height, kInvalid),
                 GridD(cam.width, cam.height, kInvalid)};
  const Pose rel = pose_to.inverse().compose(pose_from);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const double z = depth.at(x, y);
      if (!is_valid(z) || !(z > 0.0)) continue;
      const Vec3 p = backproject(Vec2(x, y), z, cam);
      const auto uv = project(transform(rel, p), cam);
      if (!uv) continue;
      flow.dx.at(x, y) = uv->x - x;
      flow.dy.at(x, y) = uv->y - y;
    }
  }
  return flow;
}

inline double max_flow_magnitude(const FlowField& flow) {
  double best = 0.0;
  for (size_t i = 0; i < flow.dx.data().size(); ++i) {
    const double fx = flow.dx.data()[i];
    const double fy = flow.dy.data()[i];
    if (!is_valid(fx) || !is_valid(fy)) continue;
    best = std::max(best, std::hypot(fx, fy));
  }
  return best;
}

enum class TestSceneKind { kWall, kStaircase, kRandomBoxes };

inline TestSceneKind test_scene_kind_from_string(const std::string& s) {
  if (s == "wall") return TestSceneKind::kWall;
  if (s == "staircase") return TestSceneKind::kStaircase;
  if (s == "random-boxes") return TestSceneKind::kRandomBoxes;
  throw UsageError("unknown test scene kind: " + s);
}

struct TestSceneParams {
  double extent = 4.0;       // lateral span of wall / staircase / box cloud
  double depth = 2.0;        // front depth
  double step = 2.0;         // staircase depth factor between bands
  int grid = 32;             // voxels per side for wall / staircase
  double alpha = 1.0;        // opacity for wall / staircase voxels
  double color_jitter = 0.15;  // checker gray jitter, breaks periodicity
  int count = 200;           // random boxes
  double size_min = 0.05;
  double size_max = 0.3;
};

inline SparseVoxelScene make_test_scene(TestSceneKind kind,
                                        const TestSceneParams& params,
                                        uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed));
  SparseVoxelScene scene;
  switch (kind) {
    case TestSceneKind::kWall:
    case TestSceneKind::kStaircase: {
      if (params.grid <= 0) throw UsageError("scene grid must be positive");
      const double cell = params.extent / params.grid;
      for (int j = 0; j < params.grid; ++j) {
        for (int i = 0; i < params.grid; ++i) {
          Voxel v;
          const double x = (i + 0.5) * cell - 0.5 * params.extent;
          const double y = (j + 0.5) * cell - 0.5 * params.extent;
          double z = params.depth;
          if (kind == TestSceneKind::kStaircase)
            z *= std::pow(params.step, 3 * i / params.grid);  // 3 depth bands
          v.center = Vec3(x, y, z + 0.5 * cell);  // front face at z
          v.size = cell;
          v.alpha = params.alpha;
          double gray = ((i + j) % 2 == 0) ? 0.85 : 0.15;
          gray += params.color_jitter * (uniform_double(rng) - 0.5);
          gray = std::clamp(gray, 0.0, 1.0);
          v.color = Vec3(gray, gray, gray);
          scene.voxels.push_back(v);
        }
      }
      break;
    }
    case TestSceneKind::kRandomBoxes: {
      if (params.count <= 0) throw UsageError("scene count must be positive");
      for (int i = 0; i < params.count; ++i) {
        Voxel v;
        v.center =
            Vec3(uniform_double(rng, -0.5 * params.extent, 0.5 * params.extent),
                 uniform_double(rng, -0.5 * params.extent, 0.5 * params.extent),
                 uniform_double(rng, params.depth, params.depth + params.extent));
        v.size = uniform_double(rng, params.size_min, params.size_max);
        v.alpha = uniform_double(rng, 0.3, 1.0);
        v.color = Vec3(uniform_double(rng), uniform_double(rng),
                       uniform_double(rng));
        scene.voxels.push_back(v);
      }
      break;
    }
  }
  scene.validate();
  return scene;
}

}  // namespace eventforge
