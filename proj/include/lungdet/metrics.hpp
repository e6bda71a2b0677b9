#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "lungdet/geometry.hpp"
#include "lungdet/nms.hpp"

namespace lungdet {

// ---------------------------------------------------------------------------
// Detection scoring

/// Strictly increasing IoU thresholds in (0,1).
class ThresholdSet {
 public:
  explicit ThresholdSet(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("ThresholdSet: empty");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!(values_[i] > 0.0 && values_[i] < 1.0)) {
        throw std::invalid_argument("ThresholdSet: thresholds must lie in (0,1)");
      }
      if (i > 0 && !(values_[i] > values_[i - 1])) {
        throw std::invalid_argument("ThresholdSet: thresholds must be strictly increasing");
      }
    }
  }

  /// 0.40, 0.45, ..., 0.75.
  static ThresholdSet competition_default() {
    return ThresholdSet({0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75});
  }

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  bool operator==(const ThresholdSet&) const = default;

 private:
  std::vector<double> values_;
};

/// Whether a prediction hits at threshold t when IoU > t or IoU >= t.
enum class HitRule { Greater, GreaterEqual };

inline bool is_hit(double overlap, double t, HitRule rule) {
  return rule == HitRule::Greater ? overlap > t : overlap >= t;
}

struct MatchedPair {
  std::size_t pred = 0;
  std::size_t gt = 0;
  double iou = 0.0;

  bool operator==(const MatchedPair&) const = default;
};

struct MatchResult {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::vector<MatchedPair> matched_pairs;
};

/// Indices of `preds` by descending confidence, input order on ties.
inline std::vector<std::size_t> confidence_order(const std::vector<Detection>& preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score > preds[b].score;
  });
  return order;
}

/// Greedy one-to-one matching at a single threshold. Predictions are visited
/// by descending confidence; each takes the unmatched gt box with the highest
/// IoU (lowest index on ties) if that IoU is a hit.
inline MatchResult match_boxes(const std::vector<Detection>& preds,
                               const std::vector<BBox>& gt, double t,
                               HitRule rule = HitRule::Greater) {
  MatchResult r;
  std::vector<bool> taken(gt.size(), false);
  for (const auto p : confidence_order(preds)) {
    std::size_t best = gt.size();
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (taken[g]) continue;
      const double o = iou(preds[p].box, gt[g]);
      if (o > best_iou) {
        best_iou = o;
        best = g;
      }
    }
    if (best < gt.size() && is_hit(best_iou, t, rule)) {
      taken[best] = true;
      r.matched_pairs.push_back({p, best, best_iou});
    }
  }
  r.tp = r.matched_pairs.size();
  r.fp = preds.size() - r.tp;
  r.fn = gt.size() - r.tp;
  return r;
}

struct ThresholdCounts {
  double threshold = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  bool operator==(const ThresholdCounts&) const = default;
};

/// Per-image score together with the per-threshold counts behind it.
struct ImageScore {
  std::optional<double> ap;
  std::vector<ThresholdCounts> counts;
};

inline ImageScore score_image(const std::vector<Detection>& preds,
                              const std::vector<BBox>& gt,
                              const ThresholdSet& thresholds,
                              HitRule rule = HitRule::Greater) {
  ImageScore s;
  s.counts.reserve(thresholds.size());
  double total = 0.0;
  for (const double t : thresholds) {
    const auto m = match_boxes(preds, gt, t, rule);
    s.counts.push_back({t, m.tp, m.fp, m.fn});
    const auto denom = m.tp + m.fp + m.fn;
    if (denom > 0) total += static_cast<double>(m.tp) / static_cast<double>(denom);
  }
  if (preds.empty() && gt.empty()) {
    s.ap = std::nullopt;
  } else if (gt.empty()) {
    s.ap = 0.0;
  } else {
    s.ap = total / static_cast<double>(thresholds.size());
  }
  return s;
}

/// Mean over thresholds of TP / (TP + FP + FN). Absent when the image has
/// neither predictions nor ground truth; 0 when only predictions exist.
inline std::optional<double> image_ap(const std::vector<Detection>& preds,
                                      const std::vector<BBox>& gt,
                                      const ThresholdSet& thresholds,
                                      HitRule rule = HitRule::Greater) {
  return score_image(preds, gt, thresholds, rule).ap;
}

/// Mean of the present per-image scores; 0 when none are present.
inline double dataset_map(const std::vector<std::optional<double>>& per_image) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : per_image) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Binary classification

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// A ratio that reports 0 with `undefined` set when its denominator is 0.
struct Ratio {
  double value = 0.0;
  bool undefined = false;
};

struct ConfusionMetrics {
  Ratio accuracy;
  Ratio specificity;
  Ratio precision;
  Ratio recall;
  Ratio f1;
};

namespace detail {
inline Ratio safe_ratio(double num, double den) {
  if (den == 0.0) return {0.0, true};
  return {num / den, false};
}
}  // namespace detail

inline ConfusionMetrics confusion_metrics(const ConfusionCounts& c) {
  const auto tp = static_cast<double>(c.tp);
  const auto fp = static_cast<double>(c.fp);
  const auto tn = static_cast<double>(c.tn);
  const auto fn = static_cast<double>(c.fn);
  ConfusionMetrics m;
  m.accuracy = detail::safe_ratio(tp + tn, static_cast<double>(c.total()));
  m.specificity = detail::safe_ratio(tn, tn + fp);
  m.precision = detail::safe_ratio(tp, tp + fp);
  m.recall = detail::safe_ratio(tp, tp + fn);
  if (m.precision.undefined || m.recall.undefined) {
    m.f1 = {0.0, true};
  } else {
    m.f1 = detail::safe_ratio(2.0 * m.precision.value * m.recall.value,
                              m.precision.value + m.recall.value);
  }
  return m;
}

/// Tally per-item binary labels.
inline ConfusionCounts confusion_counts(const std::vector<bool>& actual,
                                        const std::vector<bool>& predicted) {
  if (actual.size() != predicted.size()) {
    throw std::invalid_argument("confusion_counts: label vectors differ in length");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i]) {
      predicted[i] ? ++c.tp : ++c.fn;
    } else {
      predicted[i] ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Cross-validation folds

struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::string> ids;    // input order
  std::vector<std::size_t> folds;  // folds[i] is the fold of ids[i]

  std::size_t fold_of(const std::string& id) const {
    const auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw std::out_of_range("FoldAssignment: unknown id " + id);
    return folds[static_cast<std::size_t>(it - ids.begin())];
  }

  std::vector<std::string> members(std::size_t fold) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (folds[i] == fold) out.push_back(ids[i]);
    }
    return out;
  }

  bool operator==(const FoldAssignment&) const = default;
};

namespace detail {

// Uniform integer in [0, n) by rejection; portable across standard libraries,
// unlike std::uniform_int_distribution.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

}  // namespace detail

/// Seeded Fisher-Yates shuffle followed by round-robin assignment, so fold
/// sizes differ by at most one. Deterministic for a given (ids, k, seed).
inline FoldAssignment kfold_split(const std::vector<std::string>& ids, std::size_t k,
                                  std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (k > ids.size()) throw std::invalid_argument("kfold_split: k exceeds number of ids");
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("kfold_split: duplicate id " + id);
    }
  }

  std::vector<std::size_t> perm(ids.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(detail::uniform_below(rng, i));
    std::swap(perm[i - 1], perm[j]);
  }

  FoldAssignment out{k, ids, std::vector<std::size_t>(ids.size())};
  for (std::size_t pos = 0; pos < perm.size(); ++pos) out.folds[perm[pos]] = pos % k;
  return out;
}

// ---------------------------------------------------------------------------
// Loss values

/// 0.5 x^2 / beta for |x| < beta, |x| - 0.5 beta otherwise.
inline double smooth_l1(double x, double beta = 1.0) {
  if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1: beta must be positive");
  const double ax = std::abs(x);
  return ax < beta ? 0.5 * x * x / beta : ax - 0.5 * beta;
}

/// Binary cross entropy of probability p against label y in {0,1}.
/// p must lie strictly inside (0,1); callers clamp.
inline double bce(double p, int y) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("bce: p must lie in (0,1)");
  if (y != 0 && y != 1) throw std::invalid_argument("bce: label must be 0 or 1");
  return y == 1 ? -std::log(p) : -std::log1p(-p);
}

inline constexpr double kDefaultLossWeight = 1.0;

inline double total_loss(double cls, double reg, double lambda = kDefaultLossWeight) {
  return cls + lambda * reg;
}

}  // namespace lungdet
