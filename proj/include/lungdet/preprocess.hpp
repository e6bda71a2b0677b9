#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lungdet/errors.hpp"
#include "lungdet/geometry.hpp"

namespace lungdet {

/// 8-bit single-channel raster, row-major.
class GrayImage {
 public:
  GrayImage() = default;

  GrayImage(std::size_t width, std::size_t height, std::uint8_t fill = 0)
      : width_(width), height_(height), pixels_(width * height, fill) {}

  GrayImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (pixels_.size() != width * height) {
      throw std::invalid_argument("GrayImage: pixel count does not match dims");
    }
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }
  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels_[y * width_ + x]; }

  bool operator==(const GrayImage&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

namespace detail {
inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}
}  // namespace detail

// ---------------------------------------------------------------------------
// CLAHE

struct ClaheParams {
  std::size_t tiles_x = 8;
  std::size_t tiles_y = 8;
  /// Multiple of the uniform bin height (tile_pixels / 256); infinity
  /// disables clipping.
  double clip_limit = 2.0;
};

namespace detail {

// Contrast-limited equalization lookup table for one tile histogram. The clip
// limit is a real count (clip_limit * tile_pixels / 256) and the clipped excess
// is spread evenly over all bins, so the mapping depends only on the
// normalized histogram and not on the tile size.
inline std::array<std::uint8_t, 256> clahe_lut(const std::array<std::size_t, 256>& hist,
                                               std::size_t tile_pixels, double clip_limit) {
  std::array<std::uint8_t, 256> lut{};
  const auto n = static_cast<double>(tile_pixels);
  if (!std::isfinite(clip_limit)) {
    std::size_t cdf = 0;
    for (std::size_t v = 0; v < 256; ++v) {
      cdf += hist[v];
      lut[v] = to_u8(static_cast<double>(cdf) * 255.0 / n);
    }
    return lut;
  }
  const double limit = clip_limit * n / 256.0;
  double excess = 0.0;
  for (const auto h : hist) excess += std::max(0.0, static_cast<double>(h) - limit);
  const double spread = excess / 256.0;
  double cdf = 0.0;
  for (std::size_t v = 0; v < 256; ++v) {
    cdf += std::min(static_cast<double>(hist[v]), limit) + spread;
    lut[v] = to_u8(std::min(cdf, n) * 255.0 / n);
  }
  return lut;
}

// Tile of pixel coordinate `p` along an axis of `n` pixels split in `tiles`.
inline std::size_t tile_of(std::size_t p, std::size_t n, std::size_t tiles) {
  return p * tiles / n;
}

// Center (continuous coordinates) of tile t: midpoint of its pixel range.
inline double tile_center(std::size_t t, std::size_t n, std::size_t tiles) {
  const std::size_t begin = (t * n + tiles - 1) / tiles;
  const std::size_t end = ((t + 1) * n + tiles - 1) / tiles;
  return 0.5 * static_cast<double>(begin + end);
}

struct AxisBlend {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double w_hi = 0.0;
};

// Neighbouring tiles and blend weight for every pixel along an axis; tiles
// at the border are extended outward.
inline std::vector<AxisBlend> axis_blend(std::size_t n, std::size_t tiles) {
  std::vector<double> centers(tiles);
  for (std::size_t t = 0; t < tiles; ++t) centers[t] = tile_center(t, n, tiles);
  std::vector<AxisBlend> out(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double c = static_cast<double>(p) + 0.5;
    if (c <= centers.front()) {
      out[p] = {0, 0, 0.0};
    } else if (c >= centers.back()) {
      out[p] = {tiles - 1, tiles - 1, 0.0};
    } else {
      std::size_t t = 0;
      while (t + 1 < tiles && centers[t + 1] <= c) ++t;
      out[p] = {t, t + 1, (c - centers[t]) / (centers[t + 1] - centers[t])};
    }
  }
  return out;
}

}  // namespace detail

/// Contrast-limited adaptive histogram equalization.
inline GrayImage clahe(const GrayImage& img, const ClaheParams& p = {}) {
  if (p.tiles_x == 0 || p.tiles_y == 0) {
    throw std::invalid_argument("clahe: tile counts must be >= 1");
  }
  if (!(p.clip_limit > 0.0)) throw std::invalid_argument("clahe: clip_limit must be positive");
  if (img.width() < p.tiles_x || img.height() < p.tiles_y) {
    throw std::invalid_argument("clahe: image smaller than tile grid");
  }
  const std::size_t w = img.width();
  const std::size_t h = img.height();

  std::vector<std::array<std::size_t, 256>> hists(p.tiles_x * p.tiles_y);
  for (auto& hist : hists) hist.fill(0);
  std::vector<std::size_t> counts(hists.size(), 0);
  for (std::size_t y = 0; y < h; ++y) {
    const auto ty = detail::tile_of(y, h, p.tiles_y);
    for (std::size_t x = 0; x < w; ++x) {
      const auto t = ty * p.tiles_x + detail::tile_of(x, w, p.tiles_x);
      ++hists[t][img.at(x, y)];
      ++counts[t];
    }
  }
  std::vector<std::array<std::uint8_t, 256>> luts(hists.size());
  for (std::size_t t = 0; t < hists.size(); ++t) {
    luts[t] = detail::clahe_lut(hists[t], counts[t], p.clip_limit);
  }

  const auto bx = detail::axis_blend(w, p.tiles_x);
  const auto by = detail::axis_blend(h, p.tiles_y);
  GrayImage out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const auto& ay = by[y];
    for (std::size_t x = 0; x < w; ++x) {
      const auto& ax = bx[x];
      const auto v = img.at(x, y);
      const double l00 = luts[ay.lo * p.tiles_x + ax.lo][v];
      const double l01 = luts[ay.lo * p.tiles_x + ax.hi][v];
      const double l10 = luts[ay.hi * p.tiles_x + ax.lo][v];
      const double l11 = luts[ay.hi * p.tiles_x + ax.hi][v];
      const double top = (1.0 - ax.w_hi) * l00 + ax.w_hi * l01;
      const double bottom = (1.0 - ax.w_hi) * l10 + ax.w_hi * l11;
      out.at(x, y) = detail::to_u8((1.0 - ay.w_hi) * top + ay.w_hi * bottom);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resizing

/// Bilinear resize using the pixel-center convention
/// (src = (dst + 0.5) * in / out - 0.5, clamped to the image).
inline GrayImage resize(const GrayImage& img, std::size_t out_w, std::size_t out_h) {
  if (out_w == 0 || out_h == 0) throw std::invalid_argument("resize: output dims must be >= 1");
  if (img.width() == 0 || img.height() == 0) {
    throw std::invalid_argument("resize: empty input image");
  }
  const double sx = static_cast<double>(img.width()) / static_cast<double>(out_w);
  const double sy = static_cast<double>(img.height()) / static_cast<double>(out_h);
  const double max_x = static_cast<double>(img.width() - 1);
  const double max_y = static_cast<double>(img.height() - 1);

  GrayImage out(out_w, out_h);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const auto y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const auto x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1.0 - wx) * img.at(x0, y0) + wx * img.at(x1, y0);
      const double bottom = (1.0 - wx) * img.at(x0, y1) + wx * img.at(x1, y1);
      out.at(x, y) = detail::to_u8((1.0 - wy) * top + wy * bottom);
    }
  }
  return out;
}

inline std::vector<BBox> scale_boxes(const std::vector<BBox>& boxes, double sx, double sy) {
  if (!(sx > 0.0) || !(sy > 0.0)) throw std::invalid_argument("scale_boxes: scales must be positive");
  std::vector<BBox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) {
    out.emplace_back(b.x_min * sx, b.y_min * sy, b.x_max * sx, b.y_max * sy);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

/// Rotation about the image center (degrees, clockwise on screen since y
/// points down), then translation, then horizontal mirror.
struct AugmentSpec {
  double rotation_deg = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
  bool hflip = false;
};

struct AugmentResult {
  GrayImage image;
  std::vector<BBox> boxes;
};

namespace detail {

struct Point {
  double x;
  double y;
};

class AugmentTransform {
 public:
  AugmentTransform(const AugmentSpec& spec, std::size_t w, std::size_t h)
      : spec_(spec),
        width_(static_cast<double>(w)),
        cx_(0.5 * static_cast<double>(w)),
        cy_(0.5 * static_cast<double>(h)) {
    if (!std::isfinite(spec.rotation_deg) || !std::isfinite(spec.shift_x) ||
        !std::isfinite(spec.shift_y)) {
      throw std::invalid_argument("augment: non-finite parameter");
    }
    const double rad = spec.rotation_deg * std::numbers::pi / 180.0;
    cos_ = std::cos(rad);
    sin_ = std::sin(rad);
  }

  // Each step is skipped when it is the identity so that pure flips and
  // integer shifts stay exact.
  Point forward(Point p) const {
    if (spec_.rotation_deg != 0.0) {
      const double dx = p.x - cx_;
      const double dy = p.y - cy_;
      p = {cx_ + cos_ * dx - sin_ * dy, cy_ + sin_ * dx + cos_ * dy};
    }
    if (spec_.shift_x != 0.0 || spec_.shift_y != 0.0) p = {p.x + spec_.shift_x, p.y + spec_.shift_y};
    if (spec_.hflip) p.x = width_ - p.x;
    return p;
  }

  Point inverse(Point p) const {
    if (spec_.hflip) p.x = width_ - p.x;
    if (spec_.shift_x != 0.0 || spec_.shift_y != 0.0) p = {p.x - spec_.shift_x, p.y - spec_.shift_y};
    if (spec_.rotation_deg != 0.0) {
      const double dx = p.x - cx_;
      const double dy = p.y - cy_;
      p = {cx_ + cos_ * dx + sin_ * dy, cy_ - sin_ * dx + cos_ * dy};
    }
    return p;
  }

 private:
  AugmentSpec spec_;
  double width_;
  double cx_;
  double cy_;
  double cos_ = 1.0;
  double sin_ = 0.0;
};

// Bilinear sample at continuous coordinates; outside pixels read as 0.
inline double sample_zero_fill(const GrayImage& img, double x, double y) {
  const double u = x - 0.5;
  const double v = y - 0.5;
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const double wu = u - fu;
  const double wv = v - fv;
  const auto w = static_cast<double>(img.width());
  const auto h = static_cast<double>(img.height());
  auto px = [&](double cx, double cy) -> double {
    if (cx < 0.0 || cy < 0.0 || cx >= w || cy >= h) return 0.0;
    return img.at(static_cast<std::size_t>(cx), static_cast<std::size_t>(cy));
  };
  double acc = 0.0;
  if (wu < 1.0 && wv < 1.0) acc += (1.0 - wu) * (1.0 - wv) * px(fu, fv);
  if (wu > 0.0 && wv < 1.0) acc += wu * (1.0 - wv) * px(fu + 1.0, fv);
  if (wu < 1.0 && wv > 0.0) acc += (1.0 - wu) * wv * px(fu, fv + 1.0);
  if (wu > 0.0 && wv > 0.0) acc += wu * wv * px(fu + 1.0, fv + 1.0);
  return acc;
}

}  // namespace detail

/// Apply a deterministic augmentation to an image and its boxes. Each box
/// becomes the axis-aligned hull of its transformed corners, clipped to the
/// image; boxes that end up entirely outside are dropped.
inline AugmentResult augment(const GrayImage& img, const std::vector<BBox>& boxes,
                             const AugmentSpec& spec) {
  const detail::AugmentTransform tf(spec, img.width(), img.height());

  GrayImage out(img.width(), img.height());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      const auto src = tf.inverse({static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5});
      out.at(x, y) = detail::to_u8(detail::sample_zero_fill(img, src.x, src.y));
    }
  }

  const auto w = static_cast<double>(img.width());
  const auto h = static_cast<double>(img.height());
  std::vector<BBox> out_boxes;
  for (const auto& b : boxes) {
    const std::array<detail::Point, 4> corners{{{b.x_min, b.y_min},
                                                {b.x_max, b.y_min},
                                                {b.x_min, b.y_max},
                                                {b.x_max, b.y_max}}};
    double x0 = std::numeric_limits<double>::infinity();
    double y0 = x0;
    double x1 = -x0;
    double y1 = -x0;
    for (const auto& c : corners) {
      const auto p = tf.forward(c);
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    if (x1 <= 0.0 || y1 <= 0.0 || x0 >= w || y0 >= h) continue;
    out_boxes.push_back(clip(BBox(x0, y0, x1, y1), w, h));
  }
  return {std::move(out), std::move(out_boxes)};
}

// ---------------------------------------------------------------------------
// Binary PGM (P5, 8-bit)

/// Decode a binary P5 PGM. Accepts comments in the header and any maxval up
/// to 255; pixel values are kept as stored.
inline GrayImage decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) -> std::size_t {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (std::size_t{1} << 31)) throw ParseError(0, std::string("PGM: ") + what + " too large");
      ++pos;
    }
    if (pos == start) throw ParseError(0, std::string("PGM: missing ") + what);
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw ParseError(0, "PGM: not a binary P5 file");
  }
  pos = 2;
  const auto width = read_uint("width");
  const auto height = read_uint("height");
  const auto maxval = read_uint("maxval");
  if (width == 0 || height == 0) throw ParseError(0, "PGM: zero dimension");
  if (maxval == 0 || maxval > 255) throw ParseError(0, "PGM: only 8-bit maxval supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw ParseError(0, "PGM: missing whitespace after header");
  }
  ++pos;
  const std::size_t n = width * height;
  if (bytes.size() - pos < n) throw ParseError(0, "PGM: truncated pixel data");
  std::vector<std::uint8_t> pixels(n);
  for (std::size_t i = 0; i < n; ++i) pixels[i] = static_cast<std::uint8_t>(bytes[pos + i]);
  return GrayImage(width, height, std::move(pixels));
}

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.append(img.pixels().begin(), img.pixels().end());
  return out;
}

inline GrayImage read_pgm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_pgm(ss.str());
}

inline void write_pgm_file(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot open " + path + " for writing");
  const auto bytes = encode_pgm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::ios_base::failure("write failed: " + path);
}

}  // namespace lungdet
