#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lungdet/geometry.hpp"
#include "lungdet/nms.hpp"

namespace lungdet {

/// Recipe for the reference boxes tiled over one feature-map level.
/// Ratios are height / width. A feature pyramid is handled by one spec per
/// level, each with its own stride and scales.
struct AnchorSpec {
  double base_size = 16.0;
  std::vector<double> scales{8.0, 16.0, 32.0};
  std::vector<double> ratios{0.5, 1.0, 2.0};
  double stride = 16.0;

  std::size_t anchors_per_cell() const { return scales.size() * ratios.size(); }
};

inline void validate(const AnchorSpec& spec) {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(spec.base_size) || !positive(spec.stride)) {
    throw std::invalid_argument("AnchorSpec: base_size and stride must be positive");
  }
  if (spec.scales.empty() || spec.ratios.empty()) {
    throw std::invalid_argument("AnchorSpec: scales and ratios must be non-empty");
  }
  if (!std::all_of(spec.scales.begin(), spec.scales.end(), positive) ||
      !std::all_of(spec.ratios.begin(), spec.ratios.end(), positive)) {
    throw std::invalid_argument("AnchorSpec: scales and ratios must be positive");
  }
}

/// Tile anchors over a grid_w x grid_h feature map.
///
/// Cell (i, j) is centered at ((i + 0.5) * stride, (j + 0.5) * stride).
/// Order: cells row-major, then ratios, then scales. Each anchor has area
/// (base_size * scale)^2 and height / width equal to its ratio.
inline std::vector<BBox> generate_anchors(const AnchorSpec& spec,
                                          std::size_t grid_w,
                                          std::size_t grid_h) {
  validate(spec);
  if (grid_w == 0 || grid_h == 0) {
    throw std::invalid_argument("generate_anchors: grid dims must be >= 1");
  }

  // Half extents per (ratio, scale), shared by every cell.
  std::vector<std::pair<double, double>> half;
  half.reserve(spec.anchors_per_cell());
  for (const double ratio : spec.ratios) {
    for (const double scale : spec.scales) {
      const double side = spec.base_size * scale;
      const double w = side / std::sqrt(ratio);
      const double h = ratio * w;
      half.emplace_back(0.5 * w, 0.5 * h);
    }
  }

  std::vector<BBox> out;
  out.reserve(grid_w * grid_h * half.size());
  for (std::size_t j = 0; j < grid_h; ++j) {
    const double cy = (static_cast<double>(j) + 0.5) * spec.stride;
    for (std::size_t i = 0; i < grid_w; ++i) {
      const double cx = (static_cast<double>(i) + 0.5) * spec.stride;
      for (const auto& [hw, hh] : half) {
        out.emplace_back(cx - hw, cy - hh, cx + hw, cy + hh);
      }
    }
  }
  return out;
}

/// Training label of one anchor.
struct AnchorLabel {
  enum class Kind { Negative, Ignore, Positive };

  Kind kind = Kind::Negative;
  std::optional<std::size_t> gt_index;  // set iff Positive

  static AnchorLabel positive(std::size_t gt) { return {Kind::Positive, gt}; }
  static AnchorLabel negative() { return {Kind::Negative, std::nullopt}; }
  static AnchorLabel ignore() { return {Kind::Ignore, std::nullopt}; }

  bool operator==(const AnchorLabel&) const = default;
};

inline constexpr double kDefaultPositiveIou = 0.7;
inline constexpr double kDefaultNegativeIou = 0.3;

/// Assign objectness labels from IoU against ground truth.
///
/// Positive when the anchor's best IoU is >= pos_iou, or when the anchor is
/// the best anchor of some gt box that it overlaps (IoU > 0). Negative when
/// the best IoU is < neg_iou, Ignore otherwise. Ties go to the lowest index.
inline std::vector<AnchorLabel> label_anchors(const std::vector<BBox>& anchors,
                                              const std::vector<BBox>& gt,
                                              double pos_iou = kDefaultPositiveIou,
                                              double neg_iou = kDefaultNegativeIou) {
  if (!(0.0 <= neg_iou && neg_iou <= pos_iou && pos_iou <= 1.0)) {
    throw std::invalid_argument("label_anchors: need 0 <= neg_iou <= pos_iou <= 1");
  }
  std::vector<AnchorLabel> labels(anchors.size(), AnchorLabel::negative());
  if (gt.empty()) return labels;

  const std::size_t n = anchors.size();
  const std::size_t m = gt.size();
  std::vector<double> overlaps(n * m);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t g = 0; g < m; ++g) {
      overlaps[a * m + g] = iou(anchors[a], gt[g]);
    }
  }

  std::vector<std::size_t> best_gt(n, 0);
  std::vector<double> best_iou(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t g = 0; g < m; ++g) {
      if (overlaps[a * m + g] > best_iou[a]) {
        best_iou[a] = overlaps[a * m + g];
        best_gt[a] = g;
      }
    }
    if (best_iou[a] >= pos_iou) {
      labels[a] = AnchorLabel::positive(best_gt[a]);
    } else if (best_iou[a] < neg_iou) {
      labels[a] = AnchorLabel::negative();
    } else {
      labels[a] = AnchorLabel::ignore();
    }
  }

  for (std::size_t g = 0; g < m; ++g) {
    std::size_t best_anchor = n;
    double best = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (overlaps[a * m + g] > best) {
        best = overlaps[a * m + g];
        best_anchor = a;
      }
    }
    if (best_anchor < n) labels[best_anchor] = AnchorLabel::positive(best_gt[best_anchor]);
  }
  return labels;
}

/// Box regression offsets relative to an anchor.
struct RegressionTarget {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;

  bool operator==(const RegressionTarget&) const = default;
};

namespace detail {
inline void require_positive_extent(const BBox& anchor) {
  if (!(anchor.width() > 0.0) || !(anchor.height() > 0.0)) {
    throw std::invalid_argument("anchor must have positive width and height");
  }
}
}  // namespace detail

/// tx = (xc_g - xc_a) / w_a, ty likewise, tw = ln(w_g / w_a), th likewise.
inline RegressionTarget encode_box(const BBox& anchor, const BBox& gt) {
  detail::require_positive_extent(anchor);
  if (!(gt.width() > 0.0) || !(gt.height() > 0.0)) {
    throw std::invalid_argument("encode_box: gt must have positive width and height");
  }
  const double wa = anchor.width();
  const double ha = anchor.height();
  return {(gt.center_x() - anchor.center_x()) / wa,
          (gt.center_y() - anchor.center_y()) / ha,
          std::log(gt.width() / wa), std::log(gt.height() / ha)};
}

inline BBox decode_box(const BBox& anchor, const RegressionTarget& t) {
  detail::require_positive_extent(anchor);
  if (!std::isfinite(t.tx) || !std::isfinite(t.ty) || !std::isfinite(t.tw) ||
      !std::isfinite(t.th)) {
    throw std::invalid_argument("decode_box: non-finite regression target");
  }
  const double wa = anchor.width();
  const double ha = anchor.height();
  const double cx = anchor.center_x() + t.tx * wa;
  const double cy = anchor.center_y() + t.ty * ha;
  const double w = wa * std::exp(t.tw);
  const double h = ha * std::exp(t.th);
  return BBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
}

struct ProposalParams {
  std::size_t pre_top_n = 1000;
  std::size_t post_top_n = 100;
  double nms_iou = 0.7;
  double min_size = 1.0;
};

/// RPN-style proposal selection: clip to the image, drop boxes with a side
/// shorter than min_size, keep the pre_top_n best, hard-NMS, then return at
/// most post_top_n proposals by descending score.
inline std::vector<Detection> select_proposals(const std::vector<BBox>& boxes,
                                               const std::vector<double>& scores,
                                               double image_w, double image_h,
                                               const ProposalParams& params = {}) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("select_proposals: boxes and scores differ in length");
  }
  std::vector<Detection> candidates;
  candidates.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BBox b = clip(boxes[i], image_w, image_h);
    if (b.width() < params.min_size || b.height() < params.min_size) continue;
    candidates.push_back({b, scores[i], std::nullopt});
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (candidates.size() > params.pre_top_n) candidates.resize(params.pre_top_n);

  auto kept = hard_nms(candidates, params.nms_iou);
  if (kept.size() > params.post_top_n) kept.resize(params.post_top_n);
  return kept;
}

}  // namespace lungdet
