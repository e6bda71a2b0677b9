#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "lungdet/geometry.hpp"

namespace lungdet {

/// A scored box produced by a detector.
struct Detection {
  BBox box;
  double score = 0.0;
  std::optional<int> class_id;

  bool operator==(const Detection&) const = default;
};

inline bool is_valid(const Detection& d) {
  return is_valid(d.box) && std::isfinite(d.score) && d.score >= 0.0 &&
         d.score <= 1.0;
}

inline void validate(const Detection& d) {
  if (!is_valid(d.box)) throw std::invalid_argument("Detection: invalid box");
  if (!(d.score >= 0.0 && d.score <= 1.0)) {
    throw std::invalid_argument("Detection: score outside [0,1]");
  }
}

namespace nms_mode {

struct Hard {
  double iou_threshold = 0.5;
};
struct SoftLinear {
  double iou_threshold = 0.5;
};
struct SoftGaussian {
  double sigma = 0.5;
};

}  // namespace nms_mode

struct NmsMode {
  std::variant<nms_mode::Hard, nms_mode::SoftLinear, nms_mode::SoftGaussian>
      kind = nms_mode::Hard{};
  double score_cutoff = 0.001;
};

inline void validate(const NmsMode& mode) {
  auto check_open_unit = [](double v, const char* what) {
    if (!(v > 0.0 && v < 1.0)) {
      throw std::invalid_argument(std::string("NmsMode: ") + what +
                                  " must be in (0,1)");
    }
  };
  if (auto* h = std::get_if<nms_mode::Hard>(&mode.kind)) {
    check_open_unit(h->iou_threshold, "iou threshold");
  } else if (auto* l = std::get_if<nms_mode::SoftLinear>(&mode.kind)) {
    check_open_unit(l->iou_threshold, "iou threshold");
  } else if (auto* g = std::get_if<nms_mode::SoftGaussian>(&mode.kind)) {
    if (!(g->sigma > 0.0) || !std::isfinite(g->sigma)) {
      throw std::invalid_argument("NmsMode: sigma must be positive");
    }
  }
  if (!(mode.score_cutoff >= 0.0)) {
    throw std::invalid_argument("NmsMode: score cutoff must be >= 0");
  }
}

namespace detail {

inline bool same_class(const Detection& a, const Detection& b) {
  return a.class_id == b.class_id;
}

// Index of the highest score among `alive`, earliest input index on ties.
inline std::size_t argmax_score(const std::vector<double>& scores,
                                const std::vector<std::size_t>& alive) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < alive.size(); ++k) {
    const auto i = alive[k];
    const auto b = alive[best];
    if (scores[i] > scores[b] || (scores[i] == scores[b] && i < b)) best = k;
  }
  return best;
}

}  // namespace detail

/// Greedy Soft-NMS with an arbitrary decay function.
///
/// `decay(iou)` returns the factor (in [0,1]) applied to the score of each
/// remaining same-class detection after a detection is selected. Detections
/// whose score drops below `score_cutoff` are removed. Output is in selection
/// order, which is descending final score with input order breaking ties.
template <typename Decay>
std::vector<Detection> soft_nms(const std::vector<Detection>& dets,
                                Decay&& decay, double score_cutoff) {
  std::vector<double> scores(dets.size());
  std::vector<std::size_t> alive;
  alive.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    scores[i] = dets[i].score;
    if (!(scores[i] < score_cutoff)) alive.push_back(i);
  }

  std::vector<Detection> out;
  out.reserve(alive.size());
  while (!alive.empty()) {
    const auto pos = detail::argmax_score(scores, alive);
    const auto top = alive[pos];
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(pos));

    Detection kept = dets[top];
    kept.score = scores[top];
    out.push_back(kept);

    std::vector<std::size_t> next;
    next.reserve(alive.size());
    for (const auto i : alive) {
      if (detail::same_class(dets[top], dets[i])) {
        scores[i] *= decay(iou(dets[top].box, dets[i].box));
      }
      if (!(scores[i] < score_cutoff)) next.push_back(i);
    }
    alive = std::move(next);
  }
  return out;
}

/// Classical hard NMS: keep the best detection, delete every same-class
/// detection overlapping it with IoU > iou_threshold, repeat.
/// Detections scoring below `score_cutoff` are discarded up front.
inline std::vector<Detection> hard_nms(const std::vector<Detection>& dets,
                                       double iou_threshold,
                                       double score_cutoff = 0.0) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (!(dets[i].score < score_cutoff)) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dets[a].score > dets[b].score;
                   });

  std::vector<bool> removed(dets.size(), false);
  std::vector<Detection> out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto i = order[k];
    if (removed[i]) continue;
    out.push_back(dets[i]);
    for (std::size_t m = k + 1; m < order.size(); ++m) {
      const auto j = order[m];
      if (removed[j] || !detail::same_class(dets[i], dets[j])) continue;
      if (iou(dets[i].box, dets[j].box) > iou_threshold) removed[j] = true;
    }
  }
  return out;
}

/// Run NMS in the configured mode. Distinct class ids never suppress each
/// other; detections without a class id form one class.
inline std::vector<Detection> nms(const std::vector<Detection>& dets,
                                  const NmsMode& mode) {
  validate(mode);
  if (auto* h = std::get_if<nms_mode::Hard>(&mode.kind)) {
    return hard_nms(dets, h->iou_threshold, mode.score_cutoff);
  }
  if (auto* l = std::get_if<nms_mode::SoftLinear>(&mode.kind)) {
    const double nt = l->iou_threshold;
    return soft_nms(
        dets, [nt](double o) { return o > nt ? 1.0 - o : 1.0; },
        mode.score_cutoff);
  }
  const double sigma = std::get<nms_mode::SoftGaussian>(mode.kind).sigma;
  return soft_nms(
      dets, [sigma](double o) { return std::exp(-(o * o) / sigma); },
      mode.score_cutoff);
}

}  // namespace lungdet
