#pragma once

#include <algorithm>
#include <cstdint>

#include "eventforge/core.hpp"
#include "eventforge/event_sim.hpp"

namespace eventforge {

struct StackedFrame {
  Image data;          // H x W x 3
  uint64_t t_max = 0;  // anchor timestamp
  uint64_t dt = 0;     // normalization window (>= 1 when events exist)
  uint64_t count = 0;  // events encoded
};

// Time-surface encoding of the last `count` events. Later events overwrite
// earlier ones per pixel: (1, age, 0) for positive, (0, age, 1) for negative,
// age = (t_max - t) / dt.
inline StackedFrame tencode(const EventStream& stream, uint64_t count) {
  if (count == 0) throw UsageError("tencode: count must be positive");
  StackedFrame out;
  out.data = Image(stream.width, stream.height, 3);
  if (stream.events.empty()) return out;

  const size_t take =
      std::min<size_t>(count, stream.events.size());
  const size_t first = stream.events.size() - take;
  const uint64_t t_max = stream.events.back().t;
  const uint64_t t_min = stream.events[first].t;
  const uint64_t dt = std::max<uint64_t>(1, t_max - t_min);

  for (size_t i = first; i < stream.events.size(); ++i) {
    const Event& e = stream.events[i];
    const double age = static_cast<double>(t_max - e.t) / dt;
    if (e.p > 0) {
      out.data.at(e.x, e.y, 0) = 1.0;
      out.data.at(e.x, e.y, 1) = age;
      out.data.at(e.x, e.y, 2) = 0.0;
    } else {
      out.data.at(e.x, e.y, 0) = 0.0;
      out.data.at(e.x, e.y, 1) = age;
      out.data.at(e.x, e.y, 2) = 1.0;
    }
  }
  out.t_max = t_max;
  out.dt = dt;
  out.count = take;
  return out;
}

// Polarity-signed event mass, bilinearly split across the two nearest
// temporal bin centers. Bin centers span [t_begin, t_end].
inline Image voxel_grid(const EventStream& stream, int bins) {
  if (bins < 1) throw UsageError("voxel_grid: bins must be >= 1");
  Image out(stream.width, stream.height, bins);
  if (stream.events.empty()) return out;

  const double span = stream.t_end > stream.t_begin
                          ? static_cast<double>(stream.t_end - stream.t_begin)
                          : 1.0;
  for (const Event& e : stream.events) {
    const double pos = bins == 1 ? 0.0
                                 : static_cast<double>(e.t - stream.t_begin) /
                                       span * (bins - 1);
    int i0 = static_cast<int>(pos);
    i0 = std::clamp(i0, 0, bins - 1);
    const double w1 = pos - i0;
    const double mass = static_cast<double>(e.p);
    out.at(e.x, e.y, i0) += mass * (1.0 - w1);
    if (w1 > 0.0 && i0 + 1 < bins) out.at(e.x, e.y, i0 + 1) += mass * w1;
  }
  return out;
}

}  // namespace eventforge
