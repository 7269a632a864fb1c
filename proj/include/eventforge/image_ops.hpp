#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "eventforge/core.hpp"

namespace eventforge {

inline constexpr int kSsimRadius = 5;  // 11x11 window
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

namespace detail {

inline std::vector<double> gaussian_kernel(int radius, double sigma) {
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace detail

// Separable Gaussian blur; windows truncated at the border are renormalized
// so constant images stay constant.
inline GridD gaussian_blur(const GridD& img, int radius = kSsimRadius,
                           double sigma = kSsimSigma) {
  const std::vector<double> k = detail::gaussian_kernel(radius, sigma);
  const int w = img.width(), h = img.height();
  GridD tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0, wsum = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int xi = x + i;
        if (xi < 0 || xi >= w) continue;
        acc += k[i + radius] * img.at(xi, y);
        wsum += k[i + radius];
      }
      tmp.at(x, y) = acc / wsum;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0, wsum = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int yi = y + i;
        if (yi < 0 || yi >= h) continue;
        acc += k[i + radius] * tmp.at(x, yi);
        wsum += k[i + radius];
      }
      out.at(x, y) = acc / wsum;
    }
  return out;
}

// Per-pixel SSIM between two single-channel images in [0,1].
inline GridD ssim_map(const GridD& a, const GridD& b) {
  if (!a.same_size(b)) throw UsageError("ssim_map: size mismatch");
  const int w = a.width(), h = a.height();
  GridD aa(w, h), bb(w, h), ab(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      aa.at(x, y) = a.at(x, y) * a.at(x, y);
      bb.at(x, y) = b.at(x, y) * b.at(x, y);
      ab.at(x, y) = a.at(x, y) * b.at(x, y);
    }
  const GridD mu_a = gaussian_blur(a);
  const GridD mu_b = gaussian_blur(b);
  const GridD m_aa = gaussian_blur(aa);
  const GridD m_bb = gaussian_blur(bb);
  const GridD m_ab = gaussian_blur(ab);
  GridD out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double ma = mu_a.at(x, y), mb = mu_b.at(x, y);
      const double va = m_aa.at(x, y) - ma * ma;
      const double vb = m_bb.at(x, y) - mb * mb;
      const double cov = m_ab.at(x, y) - ma * mb;
      out.at(x, y) = ((2.0 * ma * mb + kSsimC1) * (2.0 * cov + kSsimC2)) /
                     ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
    }
  return out;
}

// Backward bilinear warp along x: out(x,y) = img(x - sign*disp(x,y), y).
// Pixels whose source coordinate leaves the image (or whose disparity is
// invalid) fall back to `fallback` and are flagged 0 in `valid`.
inline Image warp_horizontal(const Image& img, const GridD& disp,
                             double sign = 1.0,
                             Grid<uint8_t>* valid = nullptr,
                             const Image* fallback = nullptr) {
  if (img.width() != disp.width() || img.height() != disp.height())
    throw UsageError("warp_horizontal: size mismatch");
  Image out(img.width(), img.height(), img.channels());
  if (valid) *valid = Grid<uint8_t>(img.width(), img.height(), 0);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double d = disp.at(x, y);
      const double xs = x - sign * d;
      if (!is_valid(d) || xs < 0.0 || xs > img.width() - 1.0) {
        if (fallback)
          for (int c = 0; c < img.channels(); ++c)
            out.at(x, y, c) = fallback->at(x, y, c);
        continue;
      }
      if (img.width() == 1) {
        for (int c = 0; c < img.channels(); ++c)
          out.at(x, y, c) = img.at(0, y, c);
      } else {
        int x0 = static_cast<int>(xs);
        if (x0 == img.width() - 1) --x0;  // xs == w-1 exactly
        const double f = xs - x0;
        for (int c = 0; c < img.channels(); ++c)
          out.at(x, y, c) =
              (1.0 - f) * img.at(x0, y, c) + f * img.at(x0 + 1, y, c);
      }
      if (valid) valid->at(x, y) = 1;
    }
  return out;
}

}  // namespace eventforge
