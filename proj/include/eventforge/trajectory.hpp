#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "eventforge/core.hpp"
#include "eventforge/geometry.hpp"

namespace eventforge {

// Least-squares clamped cubic B-spline over tau in [0,1].
class SplineFit {
 public:
  SplineFit() = default;

  static SplineFit fit(const std::vector<double>& taus,
                       const std::vector<Vec3>& values, int num_ctrl,
                       double ridge = 1e-10) {
    if (taus.size() != values.size() || taus.size() < 4)
      throw UsageError("spline fit needs at least 4 samples");
    if (num_ctrl < 4) num_ctrl = 4;
    SplineFit s;
    s.knots_ = clamped_knots(num_ctrl);
    const int m = static_cast<int>(taus.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, num_ctrl);
    Eigen::MatrixXd b(m, 3);
    for (int i = 0; i < m; ++i) {
      if (taus[i] < 0.0 || taus[i] > 1.0)
        throw UsageError("spline fit: tau outside [0,1]");
      const int span = s.find_span(taus[i], num_ctrl);
      double n[4];
      s.basis_funs(span, taus[i], n);
      for (int k = 0; k < 4; ++k) a(i, span - 3 + k) = n[k];
      b.row(i) = values[i].transpose();
    }
    Eigen::MatrixXd ata = a.transpose() * a;
    ata.diagonal().array() += ridge;
    const Eigen::MatrixXd x = ata.ldlt().solve(a.transpose() * b);
    s.ctrl_.resize(num_ctrl);
    for (int j = 0; j < num_ctrl; ++j) s.ctrl_[j] = x.row(j).transpose();
    const Eigen::MatrixXd err = a * x - b;
    s.residual_ = std::sqrt(err.squaredNorm() / m);
    return s;
  }

  static SplineFit from_coefficients(std::vector<double> knots,
                                     std::vector<Vec3> ctrl,
                                     double residual = 0.0) {
    if (ctrl.size() < 4 || knots.size() != ctrl.size() + 4)
      throw DataError("spline: knot/coefficient size mismatch");
    SplineFit s;
    s.knots_ = std::move(knots);
    s.ctrl_ = std::move(ctrl);
    s.residual_ = residual;
    return s;
  }

  bool valid() const { return !ctrl_.empty(); }

  Vec3 eval(double tau) const {
    if (!valid()) throw UsageError("spline: evaluated before fit");
    const int num_ctrl = static_cast<int>(ctrl_.size());
    const int span = find_span(tau, num_ctrl);
    double n[4];
    basis_funs(span, tau, n);
    Vec3 out = Vec3::Zero();
    for (int k = 0; k < 4; ++k) out += n[k] * ctrl_[span - 3 + k];
    return out;
  }

  double residual() const { return residual_; }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<Vec3>& coefficients() const { return ctrl_; }

 private:
  static std::vector<double> clamped_knots(int num_ctrl) {
    std::vector<double> knots(num_ctrl + 4);
    const int segments = num_ctrl - 3;
    for (int i = 0; i < 4; ++i) knots[i] = 0.0;
    for (int i = 1; i < segments; ++i)
      knots[3 + i] = static_cast<double>(i) / segments;
    for (int i = 0; i < 4; ++i) knots[num_ctrl + i] = 1.0;
    return knots;
  }

  int find_span(double tau, int num_ctrl) const {
    const int n = num_ctrl - 1;
    if (tau >= knots_[n + 1]) return n;
    if (tau <= knots_[3]) return 3;
    int lo = 3, hi = n + 1;
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      (tau < knots_[mid] ? hi : lo) = mid;
    }
    return lo;
  }

  void basis_funs(int span, double tau, double n[4]) const {
    double left[4], right[4];
    n[0] = 1.0;
    for (int j = 1; j <= 3; ++j) {
      left[j] = tau - knots_[span + 1 - j];
      right[j] = knots_[span + j] - tau;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double temp = n[r] / (right[r + 1] + left[j - r]);
        n[r] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      n[j] = saved;
    }
  }

  std::vector<double> knots_;
  std::vector<Vec3> ctrl_;
  double residual_ = 0.0;
};

struct Trajectory {
  enum class Kind { kLocal, kGlobal };
  enum class Orientation { kFromSplines, kMotionAligned };

  Kind kind = Kind::kLocal;

  // kLocal: fixed orientation, translation swept along `axis`.
  Pose base;
  Vec3 axis = Vec3::Zero();

  // kGlobal: translation spline plus two rotation-column splines.
  SplineFit t_spline, r_spline, l_spline;
  Orientation orientation = Orientation::kFromSplines;
  double z_lo = -std::numeric_limits<double>::infinity();
  double z_hi = std::numeric_limits<double>::infinity();
};

inline Trajectory local_trajectory(const Pose& base, const Vec3& axis) {
  if (!base.is_rotation()) throw UsageError("local trajectory: invalid base");
  if (!(axis.norm() > 0.0))
    throw UsageError("local trajectory: axis must be nonzero");
  Trajectory traj;
  traj.kind = Trajectory::Kind::kLocal;
  traj.base = base;
  traj.axis = axis;
  return traj;
}

namespace detail {

// Linear-interpolation percentile of an unsorted sample.
inline double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * p / 100.0;
  const size_t lo = static_cast<size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = h - lo;
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

inline Mat3 rotation_from_columns(const Vec3& r, const Vec3& l) {
  const double ln = l.norm();
  if (ln < 1e-9) throw DataError("trajectory: degenerate look column");
  const Vec3 lu = l / ln;
  Vec3 d = lu.cross(r);
  const double dn = d.norm();
  if (dn < 1e-9)
    throw DataError("trajectory: rotation columns nearly parallel");
  d /= dn;
  Mat3 out;
  out.col(0) = d.cross(lu);
  out.col(1) = d;
  out.col(2) = lu;
  return out;
}

inline Mat3 rotation_from_velocity(const Vec3& v) {
  static const Vec3 g(0.0, 0.0, 1.0);
  const double vn = v.norm();
  if (vn < 1e-9)
    throw DataError("trajectory: velocity vanishes, cannot align orientation");
  const Vec3 n = v / vn;
  Vec3 r = g.cross(n);
  const double rn = r.norm();
  if (rn < 1e-9)
    throw DataError("trajectory: velocity parallel to gravity axis");
  r /= rn;
  Mat3 out;
  out.col(0) = r;
  out.col(1) = n.cross(r);
  out.col(2) = n;
  return out;
}

}  // namespace detail

inline Trajectory fit_global_trajectory(
    const std::vector<Pose>& poses, int stride,
    Trajectory::Orientation orientation = Trajectory::Orientation::kFromSplines) {
  if (stride <= 0) throw UsageError("fit_global_trajectory: stride must be >= 1");
  std::vector<Pose> sub;
  for (size_t i = 0; i < poses.size(); i += stride) sub.push_back(poses[i]);
  const int m = static_cast<int>(sub.size());
  if (m < 8)
    throw DataError("fit_global_trajectory: fewer than 8 poses after striding");

  std::vector<double> taus(m);
  std::vector<Vec3> ts(m), rs(m), ls(m), zs;
  std::vector<double> z_vals(m);
  for (int i = 0; i < m; ++i) {
    if (!sub[i].is_rotation())
      throw DataError("fit_global_trajectory: pose " + std::to_string(i) +
                      " is not a rotation");
    taus[i] = m == 1 ? 0.0 : static_cast<double>(i) / (m - 1);
    ts[i] = sub[i].translation;
    rs[i] = sub[i].rotation.col(0);
    ls[i] = sub[i].rotation.col(2);
    z_vals[i] = sub[i].translation.z();
  }

  const int num_ctrl = std::max(4, (m + 3) / 4);
  Trajectory traj;
  traj.kind = Trajectory::Kind::kGlobal;
  traj.orientation = orientation;
  traj.t_spline = SplineFit::fit(taus, ts, num_ctrl);
  traj.r_spline = SplineFit::fit(taus, rs, num_ctrl);
  traj.l_spline = SplineFit::fit(taus, ls, num_ctrl);
  traj.z_lo = detail::percentile(z_vals, 45.0);
  traj.z_hi = detail::percentile(z_vals, 55.0);
  return traj;
}

inline Pose sample(const Trajectory& traj, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw UsageError("trajectory sample: tau outside [0,1]");
  Pose pose;
  if (traj.kind == Trajectory::Kind::kLocal) {
    pose.rotation = traj.base.rotation;
    pose.translation = traj.base.translation + tau * traj.axis;
    return pose;
  }

  Vec3 t = traj.t_spline.eval(tau);
  t.z() = std::clamp(t.z(), traj.z_lo, traj.z_hi);
  pose.translation = t;

  if (traj.orientation == Trajectory::Orientation::kFromSplines) {
    pose.rotation = detail::rotation_from_columns(traj.r_spline.eval(tau),
                                                  traj.l_spline.eval(tau));
  } else {
    const double h = 1e-3;
    const double lo = std::max(0.0, tau - h);
    const double hi = std::min(1.0, tau + h);
    const Vec3 v =
        (traj.t_spline.eval(hi) - traj.t_spline.eval(lo)) / (hi - lo);
    pose.rotation = detail::rotation_from_velocity(v);
  }
  return pose;
}

struct AlphaShapePath {
  std::vector<int> indices;  // ordered loop, indices into the input poses
  std::vector<Vec2> loop;    // top-view vertices
  std::vector<Vec3> lifted;  // 3D positions recovered by nearest neighbor
};

// Boundary of the top-view (x,y) point set: an edge survives when one of the
// two radius-alpha disks through its endpoints contains no other point.
// alpha <= 0 selects twice the median nearest-neighbor distance.
inline AlphaShapePath alpha_shape_path(const std::vector<Pose>& poses,
                                       double alpha = 0.0) {
  if (poses.size() < 4)
    throw DataError("alpha_shape_path: fewer than 4 poses");

  std::vector<Vec2> pts;  // unique projections, first occurrence kept
  for (size_t i = 0; i < poses.size(); ++i) {
    const Vec2 p(poses[i].translation.x(), poses[i].translation.y());
    bool dup = false;
    for (const Vec2& q : pts)
      if ((p - q).norm() < 1e-12) {
        dup = true;
        break;
      }
    if (!dup) pts.push_back(p);
  }
  const int n = static_cast<int>(pts.size());
  if (n < 4) throw DataError("alpha_shape_path: fewer than 4 distinct points");

  Vec2 mean = Vec2::Zero();
  for (const Vec2& p : pts) mean += p;
  mean /= n;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const Vec2& p : pts) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  if (eig.eigenvalues()(0) < 1e-18 * std::max(1.0, eig.eigenvalues()(1)))
    throw DataError("alpha_shape_path: projected points are collinear");

  if (alpha <= 0.0) {
    std::vector<double> nn(n, std::numeric_limits<double>::infinity());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) nn[i] = std::min(nn[i], (pts[i] - pts[j]).norm());
    alpha = 2.0 * detail::percentile(nn, 50.0);
  }

  // Pairwise disk test; points on the candidate circle count as blocking.
  const double r2_block = alpha * alpha * (1.0 + 1e-9);
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Vec2 diff = pts[j] - pts[i];
      const double d2 = diff.squaredNorm();
      if (d2 > 4.0 * alpha * alpha || d2 < 1e-24) continue;
      const double off = std::sqrt(std::max(0.0, alpha * alpha - 0.25 * d2));
      const Vec2 mid = 0.5 * (pts[i] + pts[j]);
      const Vec2 perp = Vec2(-diff.y(), diff.x()).normalized();
      for (int side = 0; side < 2; ++side) {
        const Vec2 c = mid + (side == 0 ? off : -off) * perp;
        bool empty = true;
        for (int k = 0; k < n && empty; ++k) {
          if (k == i || k == j) continue;
          if ((pts[k] - c).squaredNorm() < r2_block) empty = false;
        }
        if (empty) {
          adj[i].push_back(j);
          adj[j].push_back(i);
          break;
        }
      }
    }
  }

  int start = -1;
  int on_boundary = 0;
  for (int i = 0; i < n; ++i) {
    if (adj[i].empty()) continue;
    ++on_boundary;
    if (adj[i].size() != 2)
      throw DataError(
          "alpha_shape_path: boundary is not a simple loop, adjust alpha");
    if (start < 0) start = i;
  }
  if (start < 0 || on_boundary < 3)
    throw DataError("alpha_shape_path: no closed boundary found");

  std::vector<int> cycle{start};
  int prev = -1, curr = start;
  while (true) {
    const int next = (adj[curr][0] != prev) ? adj[curr][0] : adj[curr][1];
    if (next == start) break;
    cycle.push_back(next);
    prev = curr;
    curr = next;
    if (static_cast<int>(cycle.size()) > n)
      throw DataError("alpha_shape_path: boundary walk did not close");
  }
  if (static_cast<int>(cycle.size()) != on_boundary)
    throw DataError(
        "alpha_shape_path: boundary has multiple components, adjust alpha");

  double area2 = 0.0;
  for (size_t k = 0; k < cycle.size(); ++k) {
    const Vec2& a = pts[cycle[k]];
    const Vec2& b = pts[cycle[(k + 1) % cycle.size()]];
    area2 += a.x() * b.y() - b.x() * a.y();
  }
  if (area2 < 0.0) std::reverse(cycle.begin() + 1, cycle.end());

  AlphaShapePath path;
  for (int ci : cycle) {
    const Vec2& v = pts[ci];
    // Nearest neighbor among all input poses; ties keep the lowest index.
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < poses.size(); ++i) {
      const Vec2 q(poses[i].translation.x(), poses[i].translation.y());
      const double d = (v - q).squaredNorm();
      if (d < best_d - 1e-18 ||
          (std::abs(d - best_d) <= 1e-18 && static_cast<int>(i) < best)) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    path.indices.push_back(best);
    path.loop.push_back(v);
    path.lifted.push_back(poses[best].translation);
  }
  return path;
}

// Round-trippable key/value form, embeddable in factory configs.
inline std::vector<std::pair<std::string, std::string>> trajectory_serialize(
    const Trajectory& traj) {
  std::vector<std::pair<std::string, std::string>> kv;
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  auto join_knots = [&](const SplineFit& s) {
    std::string out;
    for (double k : s.knots()) out += fmt(k) + " ";
    if (!out.empty()) out.pop_back();
    return out;
  };
  auto join_ctrl = [&](const SplineFit& s) {
    std::string out;
    for (const Vec3& c : s.coefficients())
      out += fmt(c.x()) + " " + fmt(c.y()) + " " + fmt(c.z()) + " ";
    if (!out.empty()) out.pop_back();
    return out;
  };
  if (traj.kind == Trajectory::Kind::kLocal) {
    kv.emplace_back("kind", "local");
    std::string base;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) base += fmt(traj.base.rotation(r, c)) + " ";
      base += fmt(traj.base.translation(r)) + " ";
    }
    base.pop_back();
    kv.emplace_back("base", base);
    kv.emplace_back("axis", fmt(traj.axis.x()) + " " + fmt(traj.axis.y()) +
                                " " + fmt(traj.axis.z()));
  } else {
    kv.emplace_back("kind", "spline");
    kv.emplace_back("orientation",
                    traj.orientation == Trajectory::Orientation::kFromSplines
                        ? "from_splines"
                        : "motion_aligned");
    kv.emplace_back("z_clamp", fmt(traj.z_lo) + " " + fmt(traj.z_hi));
    kv.emplace_back("t_knots", join_knots(traj.t_spline));
    kv.emplace_back("t_ctrl", join_ctrl(traj.t_spline));
    kv.emplace_back("r_knots", join_knots(traj.r_spline));
    kv.emplace_back("r_ctrl", join_ctrl(traj.r_spline));
    kv.emplace_back("l_knots", join_knots(traj.l_spline));
    kv.emplace_back("l_ctrl", join_ctrl(traj.l_spline));
  }
  return kv;
}

}  // namespace eventforge
