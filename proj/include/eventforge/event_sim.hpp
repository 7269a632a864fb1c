#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "eventforge/core.hpp"
#include "eventforge/geometry.hpp"
#include "eventforge/trajectory.hpp"
#include "eventforge/voxel_render.hpp"

namespace eventforge {

struct Event {
  uint64_t t = 0;  // microseconds
  uint16_t x = 0;
  uint16_t y = 0;
  int8_t p = 0;  // +1 / -1
};

struct EventStream {
  uint16_t width = 0;
  uint16_t height = 0;
  uint64_t t_begin = 0;
  uint64_t t_end = 0;
  std::vector<Event> events;

  void validate() const {
    if (width == 0 || height == 0)
      throw DataError("event stream: zero sensor size");
    if (t_end < t_begin) throw DataError("event stream: t_end < t_begin");
    uint64_t prev = t_begin;
    for (size_t i = 0; i < events.size(); ++i) {
      const Event& e = events[i];
      if (e.x >= width || e.y >= height)
        throw DataError("event " + std::to_string(i) + ": out of bounds");
      if (e.p != 1 && e.p != -1)
        throw DataError("event " + std::to_string(i) + ": bad polarity");
      if (e.t < prev)
        throw DataError("event " + std::to_string(i) +
                        ": timestamps not sorted");
      if (e.t > t_end)
        throw DataError("event " + std::to_string(i) + ": beyond t_end");
      prev = e.t;
    }
  }
};

inline constexpr double kLogEps = 1e-3;

// Absolute slack on log-level comparisons so crossings that land exactly on
// a frame boundary are not lost to rounding.
inline constexpr double kCrossSlack = 1e-9;

inline GridD luminance(const Image& img) {
  GridD out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.at(x, y) = img.channels() >= 3
                         ? 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
                               0.114 * img.at(x, y, 2)
                         : img.at(x, y, 0);
  return out;
}

// Per-pixel contrast thresholds and reference log levels of one sensor.
class SimulatorState {
 public:
  SimulatorState(int width, int height, double threshold)
      : c_pos_(width, height, threshold), c_neg_(width, height, threshold) {
    if (!(threshold > 0.0))
      throw UsageError("simulator: threshold must be positive");
  }

  template <typename Engine>
  SimulatorState(int width, int height, double lo, double hi, Engine& rng)
      : c_pos_(width, height), c_neg_(width, height) {
    if (!(lo > 0.0 && hi >= lo))
      throw UsageError("simulator: bad threshold range");
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double c = uniform_double(rng, lo, hi);
        c_pos_.at(x, y) = c;  // symmetric: C+ = C-
        c_neg_.at(x, y) = c;
      }
  }

  void init_reference(const GridD& first_frame) {
    ref_ = GridD(c_pos_.width(), c_pos_.height());
    for (size_t i = 0; i < ref_.data().size(); ++i)
      ref_.data()[i] = std::log(first_frame.data()[i] + kLogEps);
    initialized_ = true;
  }

  bool initialized() const { return initialized_; }
  const GridD& reference() const { return ref_; }
  const GridD& c_pos() const { return c_pos_; }
  const GridD& c_neg() const { return c_neg_; }
  GridD& mutable_reference() { return ref_; }

 private:
  GridD c_pos_, c_neg_, ref_;
  bool initialized_ = false;
};

// Events produced while the log intensity moves linearly from frame_prev to
// frame_next. Emits one event per threshold crossing, advancing the pixel's
// reference level to each crossed step. Sorted by t, ties by (y,x).
inline std::vector<Event> step(SimulatorState& state, const GridD& frame_prev,
                               const GridD& frame_next, uint64_t t_prev,
                               uint64_t t_next) {
  if (!state.initialized())
    throw UsageError("simulator step before init_reference");
  if (!frame_prev.same_size(frame_next) ||
      !frame_prev.same_size(state.reference()))
    throw UsageError("simulator step: frame size mismatch");
  if (t_next < t_prev) throw UsageError("simulator step: time runs backward");

  std::vector<Event> out;
  const double dt = static_cast<double>(t_next - t_prev);
  GridD& ref = state.mutable_reference();
  for (int y = 0; y < frame_prev.height(); ++y) {
    for (int x = 0; x < frame_prev.width(); ++x) {
      const double it = std::log(frame_prev.at(x, y) + kLogEps);
      const double itdt = std::log(frame_next.at(x, y) + kLogEps);
      if (it == itdt) continue;
      const double pol = itdt >= it ? 1.0 : -1.0;
      const double c = pol > 0.0 ? state.c_pos().at(x, y)
                                 : state.c_neg().at(x, y);
      double curr_cross = ref.at(x, y);
      while (true) {
        curr_cross += pol * c;
        const bool crossed =
            (pol > 0.0 && curr_cross > it &&
             curr_cross <= itdt + kCrossSlack) ||
            (pol < 0.0 && curr_cross < it && curr_cross >= itdt - kCrossSlack);
        if (!crossed) break;
        const double edt = (curr_cross - it) * dt / (itdt - it);
        uint64_t te = t_prev + static_cast<uint64_t>(std::llround(
                                   std::max(0.0, edt)));
        te = std::min(te, t_next);
        Event e;
        e.t = te;
        e.x = static_cast<uint16_t>(x);
        e.y = static_cast<uint16_t>(y);
        e.p = pol > 0.0 ? 1 : -1;
        out.push_back(e);
        ref.at(x, y) = curr_cross;
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  return out;
}

// Smallest n >= 0 with 2^n >= max flow magnitude; 0 for empty flow.
inline int subdivision_level(const FlowField& flow, int max_level = 16) {
  const double fmax = max_flow_magnitude(flow);
  if (!(fmax > 1.0)) return 0;
  int n = 0;
  while (n < max_level && static_cast<double>(1u << n) < fmax) ++n;
  return n;
}

struct SimOptions {
  double dtau = 0.03;         // coarse step in tau
  uint64_t t_span_us = 0;     // tau [0,1] maps onto [0, t_span_us]
  double threshold_lo = 0.15;
  double threshold_hi = 0.25;
  uint64_t cap_left = 650000;
  uint64_t cap_right = 650000;
  uint64_t seed = 0;
  int max_subdivision = 10;
  RenderOptions render;
};

struct Keyframe {
  double tau = 0.0;
  uint64_t t_us = 0;
  Image i_ll, i_l, i_r;  // RGB triplet: wide-left, left, right
  GridD depth;           // left-eye depth
  GridD disparity;
  GridD conf_ao;
  GridD conf_vsize;
};

struct StereoSimResult {
  EventStream left, right;
  std::vector<Keyframe> keyframes;
};

namespace detail {

inline Pose shifted_eye(const Pose& left, double offset_x) {
  Pose out = left;
  out.translation += left.rotation * Vec3(offset_x, 0.0, 0.0);
  return out;
}

inline void truncate_oldest_first(std::vector<Event>& events, uint64_t cap) {
  if (events.size() > cap) events.resize(cap);
}

}  // namespace detail

// Renders the trajectory at coarse tau steps, refines each step by the
// motion-adaptive subdivision rule, and feeds the refined frame pairs to the
// event stepper for both eyes. The right eye sits at (-b,0,0) in the left
// camera frame; the wide-left keyframe view at (+b,0,0).
inline StereoSimResult simulate_stereo(const SparseVoxelScene& scene,
                                       const Trajectory& traj,
                                       const StereoRig& rig,
                                       const SimOptions& opt) {
  if (!rig.valid()) throw UsageError("simulate_stereo: invalid rig");
  if (!(opt.dtau > 0.0 && opt.dtau <= 1.0))
    throw UsageError("simulate_stereo: dtau must be in (0,1]");
  if (opt.cap_left == 0 || opt.cap_right == 0)
    throw UsageError("simulate_stereo: event caps must be positive");
  if (!(opt.threshold_lo > 0.0 && opt.threshold_hi >= opt.threshold_lo))
    throw UsageError("simulate_stereo: bad threshold range");
  const CameraModel& cam = rig.camera;
  if (cam.width > 65535 || cam.height > 65535)
    throw UsageError("simulate_stereo: sensor too large for event records");

  std::vector<double> coarse{0.0};
  for (double tau = opt.dtau; tau < 1.0 - 1e-12; tau += opt.dtau)
    coarse.push_back(tau);
  coarse.push_back(1.0);

  std::mt19937_64 rng_left(derive_seed(opt.seed, 1));
  std::mt19937_64 rng_right(derive_seed(opt.seed, 2));
  SimulatorState state_l(cam.width, cam.height, opt.threshold_lo,
                         opt.threshold_hi, rng_left);
  SimulatorState state_r(cam.width, cam.height, opt.threshold_lo,
                         opt.threshold_hi, rng_right);

  const double b = rig.baseline;
  auto pose_left = [&](double tau) { return sample(traj, tau); };
  auto t_of = [&](double tau) {
    return static_cast<uint64_t>(
        std::llround(tau * static_cast<double>(opt.t_span_us)));
  };

  StereoSimResult res;
  res.left.width = res.right.width = static_cast<uint16_t>(cam.width);
  res.left.height = res.right.height = static_cast<uint16_t>(cam.height);
  res.left.t_begin = res.right.t_begin = 0;
  res.left.t_end = res.right.t_end = opt.t_span_us;

  Pose pl = pose_left(coarse[0]);
  RenderOutput cur_l = render(scene, pl, cam, opt.render);
  RenderOutput cur_r =
      render(scene, detail::shifted_eye(pl, -b), cam, opt.render);
  state_l.init_reference(luminance(cur_l.color));
  state_r.init_reference(luminance(cur_r.color));

  auto push_keyframe = [&](double tau, const Pose& pose,
                           const RenderOutput& left_out,
                           const RenderOutput& right_out) {
    Keyframe kf;
    kf.tau = tau;
    kf.t_us = t_of(tau);
    kf.i_l = left_out.color;
    kf.i_r = right_out.color;
    kf.i_ll = render(scene, detail::shifted_eye(pose, b), cam, opt.render).color;
    kf.depth = left_out.depth;
    kf.disparity = depth_to_disparity(left_out.depth, rig);
    kf.conf_ao = left_out.conf_ao;
    kf.conf_vsize = left_out.conf_vsize;
    res.keyframes.push_back(std::move(kf));
  };
  push_keyframe(coarse[0], pl, cur_l, cur_r);

  for (size_t k = 0; k + 1 < coarse.size(); ++k) {
    const double tau_a = coarse[k];
    const double tau_b = coarse[k + 1];
    const Pose pa = pose_left(tau_a);
    const Pose pb = pose_left(tau_b);

    const FlowField flow_l = flow_from_depth(cur_l.depth, pa, pb, cam);
    const FlowField flow_r =
        flow_from_depth(cur_r.depth, detail::shifted_eye(pa, -b),
                        detail::shifted_eye(pb, -b), cam);
    const int n = std::min(opt.max_subdivision,
                           std::max(subdivision_level(flow_l),
                                    subdivision_level(flow_r)));
    const int steps = 1 << n;

    double prev_tau = tau_a;
    for (int j = 1; j <= steps; ++j) {
      const double tau_j = tau_a + (tau_b - tau_a) * j / steps;
      const Pose pj = pose_left(tau_j);
      RenderOutput next_l = render(scene, pj, cam, opt.render);
      RenderOutput next_r =
          render(scene, detail::shifted_eye(pj, -b), cam, opt.render);
      const uint64_t ta = t_of(prev_tau);
      const uint64_t tb = t_of(tau_j);
      if (tb > ta) {
        auto ev_l = step(state_l, luminance(cur_l.color),
                         luminance(next_l.color), ta, tb);
        auto ev_r = step(state_r, luminance(cur_r.color),
                         luminance(next_r.color), ta, tb);
        res.left.events.insert(res.left.events.end(), ev_l.begin(),
                               ev_l.end());
        res.right.events.insert(res.right.events.end(), ev_r.begin(),
                                ev_r.end());
      }
      cur_l = std::move(next_l);
      cur_r = std::move(next_r);
      prev_tau = tau_j;
    }
    push_keyframe(tau_b, pb, cur_l, cur_r);
  }

  auto order = [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  };
  std::stable_sort(res.left.events.begin(), res.left.events.end(), order);
  std::stable_sort(res.right.events.begin(), res.right.events.end(), order);
  detail::truncate_oldest_first(res.left.events, opt.cap_left);
  detail::truncate_oldest_first(res.right.events, opt.cap_right);
  res.left.validate();
  res.right.validate();
  return res;
}

}  // namespace eventforge
