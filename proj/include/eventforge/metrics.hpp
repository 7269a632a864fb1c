#pragma once

#include <algorithm>
#include <cmath>

#include "eventforge/core.hpp"
#include "eventforge/geometry.hpp"
#include "eventforge/image_ops.hpp"

namespace eventforge {

struct DisparityMetrics {
  double mae = 0.0;
  double pe1 = 0.0;  // percentages of pixels with |error| > n
  double pe2 = 0.0;
  double pe3 = 0.0;
  size_t valid_count = 0;
  bool defined = false;
};

inline DisparityMetrics disparity_metrics(const DisparityMap& pred,
                                          const DisparityMap& gt) {
  if (!pred.same_size(gt)) throw UsageError("disparity_metrics: size mismatch");
  DisparityMetrics m;
  double abs_sum = 0.0;
  size_t bad1 = 0, bad2 = 0, bad3 = 0;
  for (size_t i = 0; i < pred.data().size(); ++i) {
    const double p = pred.data()[i];
    const double g = gt.data()[i];
    if (!is_valid(p) || !is_valid(g)) continue;
    const double err = std::abs(p - g);
    abs_sum += err;
    bad1 += err > 1.0;
    bad2 += err > 2.0;
    bad3 += err > 3.0;
    ++m.valid_count;
  }
  if (m.valid_count == 0) return m;  // defined stays false
  m.mae = abs_sum / m.valid_count;
  m.pe1 = 100.0 * bad1 / m.valid_count;
  m.pe2 = 100.0 * bad2 / m.valid_count;
  m.pe3 = 100.0 * bad3 / m.valid_count;
  m.defined = true;
  return m;
}

struct DepthImageMetrics {
  double depth_mae = 0.0;
  double delta125 = 0.0;  // % of pixels with max(z/z*, z*/z) <= 1.25
  double psnr = 0.0;      // dB, +inf when images are identical
  double ssim = 0.0;
  size_t valid_count = 0;
  bool defined = false;
};

// Text reports cap infinite / huge PSNR at 99 dB.
inline double capped_psnr_db(double psnr) { return std::min(psnr, 99.0); }

inline DepthImageMetrics depth_image_metrics(const DepthMap& z_pred,
                                             const DepthMap& z_gt,
                                             const Image& i_pred,
                                             const Image& i_gt) {
  if (!z_pred.same_size(z_gt))
    throw UsageError("depth_image_metrics: depth size mismatch");
  if (!i_pred.same_shape(i_gt))
    throw UsageError("depth_image_metrics: image shape mismatch");
  DepthImageMetrics m;

  double abs_sum = 0.0;
  size_t within = 0;
  for (size_t i = 0; i < z_pred.data().size(); ++i) {
    const double p = z_pred.data()[i];
    const double g = z_gt.data()[i];
    if (!is_valid(p) || !is_valid(g) || !(p > 0.0) || !(g > 0.0)) continue;
    abs_sum += std::abs(p - g);
    within += std::max(p / g, g / p) <= 1.25;
    ++m.valid_count;
  }
  if (m.valid_count > 0) {
    m.depth_mae = abs_sum / m.valid_count;
    m.delta125 = 100.0 * within / m.valid_count;
    m.defined = true;
  }

  double mse = 0.0;
  for (size_t i = 0; i < i_pred.data().size(); ++i) {
    const double d = i_pred.data()[i] - i_gt.data()[i];
    mse += d * d;
  }
  mse /= i_pred.data().size();
  m.psnr = mse == 0.0 ? std::numeric_limits<double>::infinity()
                      : -10.0 * std::log10(mse);

  double ssim_sum = 0.0;
  for (int c = 0; c < i_pred.channels(); ++c) {
    const GridD map = ssim_map(i_pred.channel(c), i_gt.channel(c));
    for (double v : map.data()) ssim_sum += v;
  }
  m.ssim = ssim_sum / (static_cast<double>(i_pred.data().size()));
  return m;
}

}  // namespace eventforge
