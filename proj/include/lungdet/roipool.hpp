#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lungdet/geometry.hpp"

namespace lungdet {

/// Dense multi-channel feature map; data is channel-major, then row-major.
class FeatureMap {
 public:
  FeatureMap(std::size_t width, std::size_t height, std::size_t channels,
             std::vector<double> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (data_.size() != width * height * channels) {
      throw std::invalid_argument("FeatureMap: data size does not match dims");
    }
    for (const double v : data_) {
      if (!std::isfinite(v)) throw std::invalid_argument("FeatureMap: non-finite value");
    }
  }

  FeatureMap(std::size_t width, std::size_t height, std::size_t channels, double fill)
      : FeatureMap(width, height, channels,
                   std::vector<double>(width * height * channels, fill)) {}

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t channels() const { return channels_; }
  const std::vector<double>& data() const { return data_; }

  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * height_ + y) * width_ + x];
  }

 private:
  std::size_t width_;
  std::size_t height_;
  std::size_t channels_;
  std::vector<double> data_;
};

/// Pooled output, same layout as FeatureMap.
struct RoiGrid {
  std::size_t out_w = 0;
  std::size_t out_h = 0;
  std::size_t channels = 0;
  std::vector<double> values;

  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values[(c * out_h + y) * out_w + x];
  }
};

/// Half-open integer cell range.
struct CellSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const CellSpan&) const = default;
};

/// Cells of bin `bin` when `cells` cells are split into `bins` bins:
/// [floor(bin*cells/bins), ceil((bin+1)*cells/bins)). Neighbouring bins may
/// share a boundary cell, so no bin is empty even when cells < bins.
inline CellSpan bin_span(std::size_t bin, std::size_t cells, std::size_t bins) {
  const std::size_t lo = (bin * cells) / bins;
  const std::size_t hi = ((bin + 1) * cells + bins - 1) / bins;
  return {lo, hi};
}

/// Snap a region to integer cells (floor on min, ceil on max) clipped to
/// a map of the given size. Throws when nothing is left.
inline std::pair<CellSpan, CellSpan> snap_roi(const BBox& roi, std::size_t width,
                                              std::size_t height) {
  const auto w = static_cast<double>(width);
  const auto h = static_cast<double>(height);
  if (roi.x_min >= w || roi.y_min >= h || roi.x_max <= 0.0 || roi.y_max <= 0.0) {
    throw std::invalid_argument("roi_max_pool: roi lies outside the feature map");
  }
  const double x0 = std::clamp(std::floor(roi.x_min), 0.0, w);
  const double y0 = std::clamp(std::floor(roi.y_min), 0.0, h);
  const double x1 = std::clamp(std::ceil(roi.x_max), 0.0, w);
  const double y1 = std::clamp(std::ceil(roi.y_max), 0.0, h);
  if (!(x1 > x0) || !(y1 > y0)) {
    throw std::invalid_argument("roi_max_pool: roi covers zero cells");
  }
  return {{static_cast<std::size_t>(x0), static_cast<std::size_t>(x1)},
          {static_cast<std::size_t>(y0), static_cast<std::size_t>(y1)}};
}

/// Quantized RoI max pooling into an out_w x out_h grid per channel.
inline RoiGrid roi_max_pool(const FeatureMap& map, const BBox& roi, std::size_t out_w,
                            std::size_t out_h) {
  if (out_w == 0 || out_h == 0) {
    throw std::invalid_argument("roi_max_pool: output dims must be >= 1");
  }
  const auto [xs, ys] = snap_roi(roi, map.width(), map.height());
  const std::size_t cells_x = xs.end - xs.begin;
  const std::size_t cells_y = ys.end - ys.begin;

  RoiGrid out{out_w, out_h, map.channels(),
              std::vector<double>(out_w * out_h * map.channels())};
  for (std::size_t c = 0; c < map.channels(); ++c) {
    for (std::size_t by = 0; by < out_h; ++by) {
      const auto sy = bin_span(by, cells_y, out_h);
      for (std::size_t bx = 0; bx < out_w; ++bx) {
        const auto sx = bin_span(bx, cells_x, out_w);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t y = ys.begin + sy.begin; y < ys.begin + sy.end; ++y) {
          for (std::size_t x = xs.begin + sx.begin; x < xs.begin + sx.end; ++x) {
            best = std::max(best, map.at(c, y, x));
          }
        }
        out.values[(c * out_h + by) * out_w + bx] = best;
      }
    }
  }
  return out;
}

}  // namespace lungdet
