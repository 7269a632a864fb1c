#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "eventforge/core.hpp"
#include "eventforge/geometry.hpp"
#include "eventforge/image_ops.hpp"

namespace eventforge {

struct LossWeights {
  double lambda_disp = 1.0;
  double lambda_3p = 0.1;
  double lambda_smooth = 0.1;
  double beta = 0.85;  // SSIM share of the photometric term
  double mu = 0.75;    // confidence truncation threshold
};

// eta(C; mu): zero at or below the threshold, pass-through above it.
inline double truncate_conf(double c, double mu) {
  return c <= mu ? 0.0 : c;
}

inline GridD truncate_conf(const GridD& conf, double mu) {
  GridD out(conf.width(), conf.height());
  for (size_t i = 0; i < conf.data().size(); ++i)
    out.data()[i] = truncate_conf(conf.data()[i], mu);
  return out;
}

// Per-pixel photometric error: beta*(1-SSIM)/2 + (1-beta)*L1, channels
// averaged.
inline GridD photometric_loss(const Image& a, const Image& b,
                              double beta = 0.85) {
  if (!a.same_shape(b)) throw UsageError("photometric_loss: shape mismatch");
  if (!(beta >= 0.0 && beta <= 1.0))
    throw UsageError("photometric_loss: beta outside [0,1]");
  const int w = a.width(), h = a.height(), ch = a.channels();
  GridD out(w, h, 0.0);
  for (int c = 0; c < ch; ++c) {
    const GridD ssim = ssim_map(a.channel(c), b.channel(c));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(x, y) += beta * 0.5 * (1.0 - ssim.at(x, y)) +
                        (1.0 - beta) * std::abs(a.at(x, y, c) - b.at(x, y, c));
  }
  for (double& v : out.data()) v /= ch;
  return out;
}

struct TrinocularResult {
  GridD loss;      // min over the two warped reconstructions, NaN when both
                   // samples leave the image
  GridD automask;  // 1 where warping beats the identity reconstruction
};

// Two backward reconstructions of the centre view: the wide-left image
// warped by +D and the right image by -D.
inline TrinocularResult trinocular_loss(const Image& i_ll, const Image& i_l,
                                        const Image& i_r,
                                        const DisparityMap& d,
                                        double beta = 0.85) {
  if (!i_ll.same_shape(i_l) || !i_r.same_shape(i_l))
    throw UsageError("trinocular_loss: image shape mismatch");
  if (d.width() != i_l.width() || d.height() != i_l.height())
    throw UsageError("trinocular_loss: disparity size mismatch");

  Grid<uint8_t> valid_ll, valid_r;
  const Image w_ll = warp_horizontal(i_ll, d, 1.0, &valid_ll, &i_l);
  const Image w_r = warp_horizontal(i_r, d, -1.0, &valid_r, &i_l);

  const GridD loss_ll = photometric_loss(i_l, w_ll, beta);
  const GridD loss_r = photometric_loss(i_l, w_r, beta);
  const GridD id_ll = photometric_loss(i_l, i_ll, beta);
  const GridD id_r = photometric_loss(i_l, i_r, beta);

  TrinocularResult res{GridD(d.width(), d.height(), kInvalid),
                       GridD(d.width(), d.height(), 0.0)};
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x) {
      double best = kInvalid;
      if (valid_ll.at(x, y)) best = loss_ll.at(x, y);
      if (valid_r.at(x, y) &&
          (!is_valid(best) || loss_r.at(x, y) < best))
        best = loss_r.at(x, y);
      if (!is_valid(best)) continue;
      res.loss.at(x, y) = best;
      const double identity = std::min(id_ll.at(x, y), id_r.at(x, y));
      res.automask.at(x, y) = best < identity ? 1.0 : 0.0;
    }
  return res;
}

struct LossValue {
  double value = 0.0;
  bool degenerate = false;  // no valid pixels contributed
};

// Confidence-gated distillation loss: truncated confidence weighs the L1
// disparity term, its complement hands the pixel to the masked trinocular
// term.
inline LossValue nerf_supervised_loss(const DisparityMap& d_pred,
                                      const DisparityMap& d_ref,
                                      const GridD& conf, const Image& i_ll,
                                      const Image& i_l, const Image& i_r,
                                      const LossWeights& w = {}) {
  if (!d_pred.same_size(d_ref) || !d_pred.same_size(conf))
    throw UsageError("nerf_supervised_loss: size mismatch");
  const TrinocularResult tri = trinocular_loss(i_ll, i_l, i_r, d_pred, w.beta);

  double acc = 0.0;
  size_t n = 0;
  for (int y = 0; y < d_pred.height(); ++y)
    for (int x = 0; x < d_pred.width(); ++x) {
      const double dp = d_pred.at(x, y);
      const double dr = d_ref.at(x, y);
      if (!is_valid(dp) || !is_valid(dr)) continue;
      const double eta = truncate_conf(conf.at(x, y), w.mu);
      double term = w.lambda_disp * eta * std::abs(dp - dr);
      const double residual_weight = 1.0 - eta;
      if (residual_weight != 0.0 && is_valid(tri.loss.at(x, y)))
        term += tri.automask.at(x, y) * w.lambda_3p * residual_weight *
                tri.loss.at(x, y);
      acc += term;
      ++n;
    }
  if (n == 0) {
    EVF_LOG_WARN("nerf_supervised_loss: no valid pixels");
    return {0.0, true};
  }
  return {acc / n, false};
}

struct LossTerm {
  std::string name;
  double weight = 0.0;
  double value = 0.0;
};

inline double weighted_sum_loss(const std::vector<LossTerm>& terms) {
  double acc = 0.0;
  for (const LossTerm& t : terms) acc += t.weight * t.value;
  return acc;
}

}  // namespace eventforge
