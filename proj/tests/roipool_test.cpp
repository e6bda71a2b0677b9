#include "lungdet/roipool.hpp"

#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

namespace lungdet {
namespace {

FeatureMap ramp(std::size_t w, std::size_t h) {
  std::vector<double> v(w * h);
  std::iota(v.begin(), v.end(), 1.0);
  return FeatureMap(w, h, 1, std::move(v));
}

TEST(RoiPoolTest, RampQuadrants) {
  const auto out = roi_max_pool(ramp(4, 4), BBox(0, 0, 4, 4), 2, 2);
  EXPECT_EQ(out.values, (std::vector<double>{6, 8, 14, 16}));
}

TEST(RoiPoolTest, ConstantMap) {
  const FeatureMap map(7, 5, 2, 3.5);
  const auto out = roi_max_pool(map, BBox(1.3, 0.2, 6.1, 4.9), 3, 4);
  EXPECT_EQ(out.values.size(), 3u * 4u * 2u);
  for (const double v : out.values) EXPECT_EQ(v, 3.5);
}

TEST(RoiPoolTest, NonDivisibleBins) {
  EXPECT_EQ(bin_span(0, 5, 2), (CellSpan{0, 3}));
  EXPECT_EQ(bin_span(1, 5, 2), (CellSpan{2, 5}));
  // Fewer cells than bins still yields non-empty bins.
  for (std::size_t b = 0; b < 4; ++b) {
    const auto s = bin_span(b, 1, 4);
    EXPECT_LT(s.begin, s.end);
  }
}

TEST(RoiPoolTest, SnapsOutward) {
  const auto [xs, ys] = snap_roi(BBox(0.5, 1.2, 2.1, 3.0), 10, 10);
  EXPECT_EQ(xs, (CellSpan{0, 3}));
  EXPECT_EQ(ys, (CellSpan{1, 3}));
}

TEST(RoiPoolTest, ClipsPartiallyOutsideRoi) {
  const auto out = roi_max_pool(ramp(4, 4), BBox(-3, -3, 2, 2), 1, 1);
  EXPECT_EQ(out.values, (std::vector<double>{6}));
}

TEST(RoiPoolTest, MultiChannelLayout) {
  std::vector<double> data(2 * 2 * 2);
  std::iota(data.begin(), data.end(), 0.0);
  const auto out = roi_max_pool(FeatureMap(2, 2, 2, data), BBox(0, 0, 2, 2), 1, 1);
  EXPECT_EQ(out.values, (std::vector<double>{3, 7}));
}

TEST(RoiPoolTest, Errors) {
  const auto map = ramp(4, 4);
  EXPECT_THROW(roi_max_pool(map, BBox(5, 5, 8, 8), 2, 2), std::invalid_argument);
  EXPECT_THROW(roi_max_pool(map, BBox(2, 2, 2, 3), 2, 2), std::invalid_argument);
  EXPECT_THROW(roi_max_pool(map, BBox(0, 0, 4, 4), 0, 2), std::invalid_argument);
  EXPECT_THROW(FeatureMap(2, 2, 1, std::vector<double>(3)), std::invalid_argument);
}

TEST(RoiPoolProperty, BinSpansMatchIdealOverlap) {
  for (std::size_t cells = 1; cells <= 40; ++cells) {
    for (std::size_t bins = 1; bins <= 12; ++bins) {
      std::vector<int> covered(cells, 0);
      for (std::size_t b = 0; b < bins; ++b) {
        const auto span = bin_span(b, cells, bins);
        const auto ideal = oracle::ideal_bin_cells(b, cells, bins);
        ASSERT_FALSE(ideal.empty());
        EXPECT_EQ(span.begin, ideal.front());
        EXPECT_EQ(span.end, ideal.back() + 1);
        for (auto c = span.begin; c < span.end; ++c) covered[c] = 1;
      }
      EXPECT_EQ(std::count(covered.begin(), covered.end(), 1), static_cast<long>(cells));
    }
  }
}

TEST(RoiPoolProperty, SelectsInputValuesAndIsMonotone) {
  testing::Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t w = 12, h = 9;
    std::vector<double> data(w * h);
    for (auto& v : data) v = testing::uniform(rng, -5, 5);
    const FeatureMap map(w, h, 1, data);
    const double x0 = testing::uniform(rng, -2, 10);
    const double y0 = testing::uniform(rng, -2, 7);
    // Extents keep the roi overlapping the map.
    const BBox roi(x0, y0, x0 + testing::uniform(rng, std::max(1.0, 0.5 - x0), 8),
                   y0 + testing::uniform(rng, std::max(1.0, 0.5 - y0), 6));
    const auto ow = static_cast<std::size_t>(testing::uniform_int(rng, 1, 5));
    const auto oh = static_cast<std::size_t>(testing::uniform_int(rng, 1, 5));
    const auto out = roi_max_pool(map, roi, ow, oh);

    const auto [xs, ys] = snap_roi(roi, w, h);
    for (const double v : out.values) {
      bool found = false;
      for (auto y = ys.begin; y < ys.end; ++y)
        for (auto x = xs.begin; x < xs.end; ++x) found |= map.at(0, y, x) == v;
      EXPECT_TRUE(found);
    }

    std::vector<double> bumped = data;
    for (auto& v : bumped) v += testing::uniform(rng, 0, 1);
    const auto out2 = roi_max_pool(FeatureMap(w, h, 1, bumped), roi, ow, oh);
    for (std::size_t i = 0; i < out.values.size(); ++i) EXPECT_GE(out2.values[i], out.values[i]);
  }
}

TEST(RoiPoolProperty, ExactGridCopiesCells) {
  testing::Rng rng(42);
  std::vector<double> data(8 * 8);
  for (auto& v : data) v = testing::uniform(rng, 0, 1);
  const FeatureMap map(8, 8, 1, data);
  const auto out = roi_max_pool(map, BBox(2, 1, 5, 5), 3, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 3; ++x) EXPECT_EQ(out.at(0, y, x), map.at(0, y + 1, x + 2));
}

}  // namespace
}  // namespace lungdet
