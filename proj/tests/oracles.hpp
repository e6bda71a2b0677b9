#pragma once

// Brute-force reference implementations used only by tests. Each one takes a
// different route from the library code it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "lungdet/geometry.hpp"
#include "lungdet/nms.hpp"
#include "lungdet/preprocess.hpp"

namespace lungdet::oracle {

/// Count unit cells covered by integer-coordinate boxes.
inline double raster_iou(const BBox& a, const BBox& b) {
  const auto lo = static_cast<long>(std::floor(std::min(a.x_min, b.x_min)));
  const auto hi = static_cast<long>(std::ceil(std::max(a.x_max, b.x_max)));
  const auto lo_y = static_cast<long>(std::floor(std::min(a.y_min, b.y_min)));
  const auto hi_y = static_cast<long>(std::ceil(std::max(a.y_max, b.y_max)));
  auto inside = [](const BBox& box, long x, long y) {
    return x >= box.x_min && x + 1 <= box.x_max && y >= box.y_min && y + 1 <= box.y_max;
  };
  long inter = 0;
  long uni = 0;
  for (long y = lo_y; y < hi_y; ++y) {
    for (long x = lo; x < hi; ++x) {
      const bool in_a = inside(a, x, y);
      const bool in_b = inside(b, x, y);
      inter += (in_a && in_b) ? 1 : 0;
      uni += (in_a || in_b) ? 1 : 0;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline long raster_intersection(const BBox& a, const BBox& b) {
  long n = 0;
  for (long y = static_cast<long>(std::min(a.y_min, b.y_min)); y < static_cast<long>(std::max(a.y_max, b.y_max)); ++y) {
    for (long x = static_cast<long>(std::min(a.x_min, b.x_min)); x < static_cast<long>(std::max(a.x_max, b.x_max)); ++x) {
      const bool in_a = x >= a.x_min && x + 1 <= a.x_max && y >= a.y_min && y + 1 <= a.y_max;
      const bool in_b = x >= b.x_min && x + 1 <= b.x_max && y >= b.y_min && y + 1 <= b.y_max;
      n += (in_a && in_b) ? 1 : 0;
    }
  }
  return n;
}

/// Reference hard NMS: walk detections by (score desc, index asc) and keep a
/// detection iff no already-kept same-class detection overlaps it by > nt.
inline std::vector<Detection> reference_hard_nms(const std::vector<Detection>& dets, double nt,
                                                 double cutoff) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].score >= cutoff) idx.push_back(i);
  }
  // Selection sort keeps the tie rule explicit.
  for (std::size_t a = 0; a < idx.size(); ++a) {
    std::size_t best = a;
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      const auto& cand = dets[idx[b]];
      const auto& cur = dets[idx[best]];
      if (cand.score > cur.score || (cand.score == cur.score && idx[b] < idx[best])) best = b;
    }
    std::swap(idx[a], idx[best]);
  }
  std::vector<Detection> kept;
  for (const auto i : idx) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.class_id == dets[i].class_id && iou(k.box, dets[i].box) > nt) suppressed = true;
    }
    if (!suppressed) kept.push_back(dets[i]);
  }
  return kept;
}

/// Global histogram equalization: lut[v] = round(255 * cdf(v) / N), integer math.
inline GrayImage global_hist_eq(const GrayImage& img) {
  std::array<std::uint64_t, 256> hist{};
  for (const auto p : img.pixels()) ++hist[p];
  const std::uint64_t n = img.pixels().size();
  std::array<std::uint8_t, 256> lut{};
  std::uint64_t cdf = 0;
  for (std::size_t v = 0; v < 256; ++v) {
    cdf += hist[v];
    lut[v] = static_cast<std::uint8_t>((2 * 255 * cdf + n) / (2 * n));
  }
  std::vector<std::uint8_t> px;
  px.reserve(n);
  for (const auto p : img.pixels()) px.push_back(lut[p]);
  return GrayImage(img.width(), img.height(), std::move(px));
}

/// Cells (within a span of `cells`) whose open interval (c, c+1) overlaps the
/// ideal bin interval (bin*cells/bins, (bin+1)*cells/bins).
inline std::vector<std::size_t> ideal_bin_cells(std::size_t bin, std::size_t cells,
                                                std::size_t bins) {
  const double a = static_cast<double>(bin) * static_cast<double>(cells) / static_cast<double>(bins);
  const double b = static_cast<double>(bin + 1) * static_cast<double>(cells) / static_cast<double>(bins);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < cells; ++c) {
    const double lo = std::max(a, static_cast<double>(c));
    const double hi = std::min(b, static_cast<double>(c + 1));
    if (hi > lo) out.push_back(c);
  }
  return out;
}

struct OracleMatch {
  std::size_t tp = 0;
  std::vector<std::optional<std::size_t>> assignment;  // per prediction
};

/// Enumerate every partial one-to-one assignment of predictions to gt boxes
/// whose pairs are hits, and pick the one that is lexicographically best
/// when predictions are read in confidence order: higher IoU first, then
/// lower gt index, and a match always beats no match.
inline OracleMatch enumerate_match(const std::vector<Detection>& preds,
                                   const std::vector<BBox>& gt, double t, bool inclusive = false) {
  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });

  std::vector<std::optional<std::size_t>> best;
  std::vector<std::optional<std::size_t>> cur(preds.size());
  std::vector<bool> used(gt.size(), false);

  // Key for one prediction: (matched, iou, -gt index).
  auto better = [&](const std::vector<std::optional<std::size_t>>& x,
                    const std::vector<std::optional<std::size_t>>& y) {
    for (const auto p : order) {
      const auto& a = x[p];
      const auto& b = y[p];
      if (a.has_value() != b.has_value()) return a.has_value();
      if (!a) continue;
      const double ia = iou(preds[p].box, gt[*a]);
      const double ib = iou(preds[p].box, gt[*b]);
      if (ia != ib) return ia > ib;
      if (*a != *b) return *a < *b;
    }
    return false;
  };

  std::function<void(std::size_t)> rec = [&](std::size_t k) {
    if (k == order.size()) {
      if (best.empty() || better(cur, best)) best = cur;
      return;
    }
    const auto p = order[k];
    cur[p] = std::nullopt;
    rec(k + 1);
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (used[g]) continue;
      const double o = iou(preds[p].box, gt[g]);
      if (!(inclusive ? o >= t : o > t)) continue;
      used[g] = true;
      cur[p] = g;
      rec(k + 1);
      used[g] = false;
      cur[p] = std::nullopt;
    }
  };
  rec(0);

  OracleMatch m;
  m.assignment = best.empty() ? cur : best;
  for (const auto& a : m.assignment) m.tp += a ? 1 : 0;
  return m;
}

}  // namespace lungdet::oracle
