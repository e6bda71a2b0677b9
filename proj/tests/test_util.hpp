#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lungdet/geometry.hpp"
#include "lungdet/nms.hpp"
#include "lungdet/preprocess.hpp"

namespace lungdet::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline long uniform_int(Rng& rng, long lo, long hi) {
  return std::uniform_int_distribution<long>(lo, hi)(rng);
}

/// Box with integer corners in [0, limit].
inline BBox random_int_box(Rng& rng, long limit) {
  long x0 = uniform_int(rng, 0, limit);
  long x1 = uniform_int(rng, 0, limit);
  long y0 = uniform_int(rng, 0, limit);
  long y1 = uniform_int(rng, 0, limit);
  if (x1 < x0) std::swap(x0, x1);
  if (y1 < y0) std::swap(y0, y1);
  return BBox(static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1),
              static_cast<double>(y1));
}

/// Box with positive extent and real corners inside [0, limit].
inline BBox random_box(Rng& rng, double limit, double min_side = 1.0) {
  const double w = uniform(rng, min_side, limit / 2);
  const double h = uniform(rng, min_side, limit / 2);
  const double x = uniform(rng, 0.0, limit - w);
  const double y = uniform(rng, 0.0, limit - h);
  return BBox(x, y, x + w, y + h);
}

/// Value on a 1/denom grid in [0, limit].
inline double grid_value(Rng& rng, long limit, long denom) {
  return static_cast<double>(uniform_int(rng, 0, limit * denom)) / static_cast<double>(denom);
}

inline BBox random_grid_box(Rng& rng, long limit, long denom) {
  double x0 = grid_value(rng, limit, denom);
  double x1 = grid_value(rng, limit, denom);
  double y0 = grid_value(rng, limit, denom);
  double y1 = grid_value(rng, limit, denom);
  if (x1 < x0) std::swap(x0, x1);
  if (y1 < y0) std::swap(y0, y1);
  return BBox(x0, y0, x1, y1);
}

/// Clustered detections so that overlaps actually happen.
inline std::vector<Detection> random_detections(Rng& rng, std::size_t n, bool with_classes = false) {
  std::vector<Detection> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = uniform(rng, 20, 80);
    const double cy = uniform(rng, 20, 80);
    const double w = uniform(rng, 5, 40);
    const double h = uniform(rng, 5, 40);
    // Coarse scores make ties likely.
    const double score = static_cast<double>(uniform_int(rng, 0, 20)) / 20.0;
    Detection d{BBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2), score, std::nullopt};
    if (with_classes) d.class_id = static_cast<int>(uniform_int(rng, 0, 2));
    out.push_back(d);
  }
  return out;
}

inline GrayImage random_image(Rng& rng, std::size_t w, std::size_t h) {
  std::vector<std::uint8_t> px(w * h);
  for (auto& p : px) p = static_cast<std::uint8_t>(uniform_int(rng, 0, 255));
  return GrayImage(w, h, std::move(px));
}

}  // namespace lungdet::testing
