#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lanegen/control_fusion.hpp"
#include "test_util.hpp"

namespace lanegen {
namespace {

using testing::random_mask;
using testing::subset_of;

TEST(ParseAnnotation, SingleLane) {
  const auto ann = parse_annotation("10 590 20 580\n");
  ASSERT_EQ(ann.lanes.size(), 1u);
  EXPECT_EQ(ann.lanes[0], (Lane{{10, 590}, {20, 580}}));
}

TEST(ParseAnnotation, EmptyAndBlankLines) {
  EXPECT_TRUE(parse_annotation("").lanes.empty());
  EXPECT_TRUE(parse_annotation("\n  \n\r\n").lanes.empty());
}

TEST(ParseAnnotation, CulaneStyleTrailingSpacesAndCrLf) {
  const auto ann = parse_annotation("532.2 590 571.5 570 \r\n-3.25 300 12 290 \r\n");
  ASSERT_EQ(ann.lanes.size(), 2u);
  EXPECT_DOUBLE_EQ(ann.lanes[1][0].x, -3.25);
}

TEST(ParseAnnotation, Errors) {
  EXPECT_THROW(parse_annotation("10 590 20"), ParseError);
  EXPECT_THROW(parse_annotation("10 590 abc 580"), ParseError);
  EXPECT_THROW(parse_annotation("10 590"), ParseError);
  EXPECT_THROW(parse_annotation("10 590 nan 4"), ParseError);
}

TEST(ParseAnnotation, SerializeRoundTripsRandomAnnotations) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(-50, 1700);
  std::uniform_int_distribution<int> n_lanes(0, 5), n_pts(2, 30);
  for (int trial = 0; trial < 200; ++trial) {
    LaneAnnotation ann;
    const int nl = n_lanes(rng);
    for (int l = 0; l < nl; ++l) {
      Lane lane;
      const int np = n_pts(rng);
      for (int p = 0; p < np; ++p) lane.push_back({coord(rng), coord(rng)});
      ann.lanes.push_back(lane);
    }
    ASSERT_EQ(parse_annotation(serialize_annotation(ann)), ann);
  }
}

double point_segment_distance(double px, double py, LanePoint a, LanePoint b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 == 0 ? 0 : ((px - a.x) * dx + (py - a.y) * dy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (a.x + t * dx), py - (a.y + t * dy));
}

GrayMask brute_rasterize(const LaneAnnotation& ann, int w, int h, double stroke) {
  GrayMask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (const auto& lane : ann.lanes)
        for (std::size_t s = 0; s + 1 < lane.size(); ++s)
          if (point_segment_distance(x, y, lane[s], lane[s + 1]) <= stroke / 2 + 1e-12) m.at(x, y) = 1;
  return m;
}

TEST(RasterizeAnnotation, HorizontalLaneStrokeOneIsBresenhamRow) {
  LaneAnnotation ann{{Lane{{3, 4}, {12, 4}}}};
  const auto m = rasterize_annotation(ann, 16, 8, 1);
  EXPECT_EQ(m, brute_rasterize(ann, 16, 8, 1));
  EXPECT_EQ(m.count(), 10u);
  for (int x = 3; x <= 12; ++x) EXPECT_EQ(m.at(x, 4), 1);
}

TEST(RasterizeAnnotation, EmptyAndOutOfFrame) {
  EXPECT_EQ(rasterize_annotation({}, 10, 10, 4).count(), 0u);
  LaneAnnotation outside{{Lane{{-40, -40}, {-20, -30}}, Lane{{50, 2}, {60, 8}}}};
  EXPECT_EQ(rasterize_annotation(outside, 10, 10, 4).count(), 0u);
  EXPECT_THROW(rasterize_annotation({}, 0, 10, 4), InvalidArgument);
  EXPECT_THROW(rasterize_annotation({}, 10, 10, 0), InvalidArgument);
}

TEST(RasterizeAnnotation, MatchesDistanceOracleOnDyadicPolylines) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> q(-20, 180);  // quarter-pixel grid
  std::uniform_int_distribution<int> stroke(1, 6);
  for (int trial = 0; trial < 60; ++trial) {
    LaneAnnotation ann;
    for (int l = 0; l < 2; ++l) {
      Lane lane;
      for (int p = 0; p < 3; ++p) lane.push_back({q(rng) / 4.0, q(rng) / 4.0});
      ann.lanes.push_back(lane);
    }
    const int s = stroke(rng);
    ASSERT_EQ(rasterize_annotation(ann, 40, 36, s), brute_rasterize(ann, 40, 36, s)) << trial;
  }
}

TEST(Fuse, TrivialCases) {
  GrayMask ones(4, 3, 1), zeros(4, 3, 0);
  EXPECT_EQ(fuse(ones, ones, zeros).mask, ones);
  std::mt19937_64 rng(13);
  const auto e = random_mask(rng, 4, 3);
  const auto m = random_mask(rng, 4, 3);
  EXPECT_EQ(fuse(zeros, m, e).mask, e);
}

TEST(Fuse, TwoByTwoTruthTable) {
  GrayMask a(2, 2, {1, 1, 0, 0}), m(2, 2, {1, 0, 1, 0}), e(2, 2, {0, 1, 0, 1});
  const auto c = fuse(a, m, e).mask;
  EXPECT_EQ(std::vector<std::uint8_t>(c.data().begin(), c.data().end()), (std::vector<std::uint8_t>{1, 1, 0, 1}));
}

TEST(Fuse, DimensionMismatch) {
  EXPECT_THROW(fuse(GrayMask(2, 2), GrayMask(2, 3), GrayMask(2, 2)), DimensionMismatch);
  EXPECT_THROW(fuse(GrayMask(2, 2), GrayMask(2, 2), GrayMask(3, 2)), DimensionMismatch);
}

TEST(Fuse, OrAndMaxReadingsAgreeAndMonotone) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_mask(rng, 9, 7), m = random_mask(rng, 9, 7), e = random_mask(rng, 9, 7);
    const auto c = fuse(a, m, e).mask;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const int prod = a.data()[i] * m.data()[i];
      EXPECT_EQ(c.data()[i], std::max(prod, int(e.data()[i])));
    }
    // A (.) M subset of C0
    GrayMask am(9, 7);
    for (std::size_t i = 0; i < am.size(); ++i) am.data()[i] = a.data()[i] & m.data()[i];
    EXPECT_TRUE(subset_of(am, c));
    // Idempotent when E = A (.) M
    EXPECT_EQ(fuse(a, m, am).mask, am);
    // Monotone in each argument
    GrayMask bigger = a;
    for (auto& v : bigger.data()) v = v | (rng() & 1);
    EXPECT_TRUE(subset_of(c, fuse(bigger, m, e).mask));
  }
}

TEST(BuildControlMap, BlackImageNoLanesIsEmpty) {
  ImageBuffer img(24, 16, 0);
  EXPECT_EQ(build_control_map(img, {}, FusionParams{}).mask.count(), 0u);
}

TEST(BuildControlMap, WhiteImageReducesToAnnotation) {
  ImageBuffer img(24, 16, 255);
  LaneAnnotation ann{{Lane{{2, 15}, {20, 1}}}};
  FusionParams p;
  EXPECT_EQ(build_control_map(img, ann, p).mask, rasterize_annotation(ann, 24, 16, p.stroke));
}

TEST(BuildControlMap, PaintedStripesSceneComposesConstituents) {
  // Dark road with two bright painted stripes; one stripe is annotated.
  const int w = 64, h = 40;
  ImageBuffer img(w, h, 60);
  for (int y = 0; y < h; ++y)
    for (int x : {18, 19, 20, 44, 45, 46})
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = 235;
  LaneAnnotation ann{{Lane{{19, 0}, {19, 39}}}};
  FusionParams p;
  const auto c0 = build_control_map(img, ann, p).mask;
  const auto a = rasterize_annotation(ann, w, h, p.stroke);
  const auto m = color_threshold(img, p.thresholds);
  const auto e = canny(img, p.thresholds, p.blur_sigma);
  EXPECT_EQ(c0, fuse(a, m, e).mask);
  GrayMask am(w, h);
  for (std::size_t i = 0; i < am.size(); ++i) am.data()[i] = a.data()[i] & m.data()[i];
  EXPECT_GT(am.count(), 0u);
  EXPECT_TRUE(subset_of(am, c0));
  EXPECT_GT(e.count(), 0u);  // the unannotated stripe still contributes edges
}

}  // namespace
}  // namespace lanegen
