#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lungdet {

/// Axis-aligned box in continuous pixel coordinates, stored as corners.
///
/// There is no "+1" inclusive-pixel convention: a box [0,0,2,2] covers
/// exactly four unit cells. Zero-area boxes are valid; negative extents and
/// non-finite coordinates are rejected at construction.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  constexpr BBox() = default;

  BBox(double x0, double y0, double x1, double y1)
      : x_min(x0), y_min(y0), x_max(x1), y_max(y1) {
    if (!std::isfinite(x0) || !std::isfinite(y0) || !std::isfinite(x1) ||
        !std::isfinite(y1)) {
      throw std::invalid_argument("BBox: non-finite coordinate");
    }
    if (x1 < x0 || y1 < y0) {
      throw std::invalid_argument("BBox: negative extent");
    }
  }

  /// Dataset-style (x, y, width, height) to corners; x_max = x + w.
  static BBox from_xywh(double x, double y, double w, double h) {
    if (!(w >= 0.0) || !(h >= 0.0)) {
      throw std::invalid_argument("BBox: negative width or height");
    }
    return BBox(x, y, x + w, y + h);
  }

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  bool operator==(const BBox&) const = default;
};

inline bool is_valid(const BBox& b) {
  return std::isfinite(b.x_min) && std::isfinite(b.y_min) &&
         std::isfinite(b.x_max) && std::isfinite(b.y_max) &&
         b.x_min <= b.x_max && b.y_min <= b.y_max;
}

inline double area(const BBox& b) { return b.width() * b.height(); }

/// Overlap area; zero for disjoint or edge-touching boxes.
inline double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

/// Intersection over union in [0,1]. Two zero-area boxes give 0, not NaN.
inline double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = area(a) + area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Clamp a box into [0,w]x[0,h]. The result may be degenerate.
inline BBox clip(const BBox& b, double w, double h) {
  const double x0 = std::clamp(b.x_min, 0.0, w);
  const double y0 = std::clamp(b.y_min, 0.0, h);
  const double x1 = std::clamp(b.x_max, 0.0, w);
  const double y1 = std::clamp(b.y_max, 0.0, h);
  return BBox(x0, y0, x1, y1);
}

inline std::string to_string(const BBox& b) {
  return "[" + std::to_string(b.x_min) + "," + std::to_string(b.y_min) + "," +
         std::to_string(b.x_max) + "," + std::to_string(b.y_max) + "]";
}

}  // namespace lungdet
