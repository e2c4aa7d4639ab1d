#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gridcascade/gridcodec.hpp"

using namespace gridcascade;

namespace {

const GridLayout kLayout{};
const BBox kProposal(10, 10, 30, 30);

HeatmapSet single_peak(int row, int col) {
  HeatmapSet h(kProposal, 2.0, kLayout);
  for (int k = 0; k < h.channels(); ++k) h.at(k, row, col) = 1.0;
  return h;
}

DecodedPoints points_on(const BBox& box, double confidence = 1.0) {
  DecodedPoints pts(kGridPoints);
  const auto g = grid_points(box);
  for (int k = 0; k < kGridPoints; ++k) {
    pts[static_cast<std::size_t>(k)].location = g[static_cast<std::size_t>(k)];
    pts[static_cast<std::size_t>(k)].confidence = confidence;
  }
  return pts;
}

bool in_closed_region(const CellPoint& c, int s) {
  return c.u >= 0.0 && c.u <= s && c.v >= 0.0 && c.v <= s;
}

}  // namespace

TEST(GridLayout, RejectsUnsupportedLayouts) {
  EXPECT_THROW((GridLayout{4, 28}.validate()), std::invalid_argument);
  EXPECT_THROW((GridLayout{9, 2}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((GridLayout{9, 28}.validate()));
}

TEST(GridPoints, LayoutOrderIsRowMajor) {
  const auto p = grid_points(BBox(0, 10, 4, 30));
  EXPECT_EQ(p[0].x, 0.0);
  EXPECT_EQ(p[0].y, 10.0);
  EXPECT_EQ(p[4].x, 2.0);
  EXPECT_EQ(p[4].y, 20.0);
  EXPECT_EQ(p[5].x, 4.0);
  EXPECT_EQ(p[5].y, 20.0);
  EXPECT_EQ(p[8].x, 4.0);
  EXPECT_EQ(p[8].y, 30.0);
}

TEST(Mapping, ImageToCellCenterOfDoubledRegion) {
  const CellPoint c = image_to_cell({20, 20}, kProposal, 2.0, 28);
  EXPECT_NEAR(c.u, 14.0, 1e-12);
  EXPECT_NEAR(c.v, 14.0, 1e-12);
}

TEST(Mapping, RegionOriginMapsToZero) {
  const CellPoint c = image_to_cell({0, 0}, kProposal, 2.0, 28);
  EXPECT_NEAR(c.u, 0.0, 1e-12);
  EXPECT_NEAR(c.v, 0.0, 1e-12);
}

TEST(Mapping, PointBeyondRegionLeavesGrid) {
  const CellPoint c = image_to_cell({50, 20}, kProposal, 2.0, 28);
  EXPECT_NEAR(c.u, 35.0, 1e-12);
  EXPECT_NEAR(c.v, 14.0, 1e-12);
  int row = 0;
  int col = 0;
  EXPECT_FALSE(cell_index(c, 28, row, col));
}

TEST(Mapping, CellToImageInvertsExamples) {
  const Point2 p = cell_to_image({14, 14}, kProposal, 2.0, 28);
  EXPECT_NEAR(p.x, 20.0, 1e-12);
  EXPECT_NEAR(p.y, 20.0, 1e-12);
  const Point2 o = cell_to_image({0, 0}, kProposal, 2.0, 28);
  EXPECT_NEAR(o.x, 0.0, 1e-12);
  EXPECT_NEAR(o.y, 0.0, 1e-12);
}

TEST(Mapping, RejectsDegenerateProposal) {
  EXPECT_THROW(image_to_cell({0, 0}, BBox(1, 1, 1, 5), 2.0, 28), std::invalid_argument);
  EXPECT_THROW(HeatmapSet(BBox(1, 1, 5, 1), 2.0, kLayout), std::invalid_argument);
}

TEST(Mapping, FarEdgeBelongsToLastCell) {
  int row = -1;
  int col = -1;
  ASSERT_TRUE(cell_index({28.0, 28.0}, 28, row, col));
  EXPECT_EQ(row, 27);
  EXPECT_EQ(col, 27);
  ASSERT_TRUE(cell_index({3.7, 0.0}, 28, row, col));
  EXPECT_EQ(row, 0);
  EXPECT_EQ(col, 3);
}

TEST(EncodeTarget, CenteredGtGivesBlockAroundMiddleCell) {
  const HeatmapSet t = encode_target(kProposal, kProposal, 2.0, kLayout);
  for (int r = 0; r < 28; ++r) {
    for (int c = 0; c < 28; ++c) {
      const bool inside = r >= 13 && r <= 15 && c >= 13 && c <= 15;
      ASSERT_EQ(t.at(4, r, c), inside ? 1.0 : 0.0) << r << "," << c;
    }
  }
  for (int k = 0; k < kGridPoints; ++k) EXPECT_FALSE(t.masked(k));
  double sum = 0.0;
  for (const double v : t.channel(4)) sum += v;
  EXPECT_EQ(sum, 9.0);
}

TEST(EncodeTarget, GtOutsideRegionMasksEverything) {
  const HeatmapSet t = encode_target(BBox(100, 100, 120, 120), kProposal, 2.0, kLayout);
  for (int k = 0; k < kGridPoints; ++k) {
    EXPECT_TRUE(t.masked(k));
    for (const double v : t.channel(k)) ASSERT_EQ(v, 0.0);
  }
}

TEST(EncodeTarget, RegionSizedGtClipsCornerBlocks) {
  const HeatmapSet t = encode_target(BBox(0, 0, 40, 40), kProposal, 2.0, kLayout);
  auto count = [&](int k) {
    double s = 0.0;
    for (const double v : t.channel(k)) s += v;
    return s;
  };
  EXPECT_EQ(count(0), 4.0);
  EXPECT_EQ(t.at(0, 0, 0), 1.0);
  EXPECT_EQ(t.at(0, 1, 1), 1.0);
  EXPECT_EQ(count(8), 4.0);
  EXPECT_EQ(t.at(8, 27, 27), 1.0);
  EXPECT_EQ(t.at(8, 26, 26), 1.0);
  EXPECT_EQ(count(1), 6.0);
  for (int k = 0; k < kGridPoints; ++k) EXPECT_FALSE(t.masked(k));
}

TEST(DecodePoints, SinglePeakUsesCellCenter) {
  const auto d = decode_points(single_peak(14, 14));
  const double expected = 14.5 / 28.0 * 40.0;
  EXPECT_NEAR(expected, 20.714285714285715, 1e-12);
  for (const auto& p : d) {
    EXPECT_NEAR(p.location.x, expected, 1e-12);
    EXPECT_NEAR(p.location.y, expected, 1e-12);
    EXPECT_EQ(p.confidence, 1.0);
    EXPECT_EQ(p.row, 14);
    EXPECT_EQ(p.col, 14);
  }
}

TEST(DecodePoints, UniformChannelTiesToFirstCell) {
  HeatmapSet h(kProposal, 2.0, kLayout);
  for (auto& v : h.values()) v = 0.25;
  for (const auto& p : decode_points(h)) {
    EXPECT_EQ(p.row, 0);
    EXPECT_EQ(p.col, 0);
    EXPECT_EQ(p.confidence, 0.25);
  }
}

TEST(DecodePoints, FlatBlockDecodesToMiddle) {
  const HeatmapSet t = encode_target(kProposal, kProposal, 2.0, kLayout);
  const auto d = decode_points(t);
  EXPECT_NEAR(d[4].location.x, 20.714285714285715, 1e-12);
  EXPECT_NEAR(d[4].location.y, 20.714285714285715, 1e-12);
}

TEST(HeatmapSet, ValidateRejectsOutOfRange) {
  HeatmapSet h(kProposal, 2.0, kLayout);
  EXPECT_NO_THROW(h.validate());
  h.at(3, 2, 1) = 1.5;
  EXPECT_THROW(h.validate(), std::domain_error);
  h.at(3, 2, 1) = std::nan("");
  EXPECT_THROW(h.validate(), std::domain_error);
}

TEST(PointsToBox, ConsistentPointsGiveTheBox) {
  const BBox b(3.25, 7.5, 19.0, 44.125);
  EXPECT_EQ(points_to_box(points_on(b), kLayout), b);
}

TEST(PointsToBox, WeightedLeftEdge) {
  DecodedPoints p = points_on(BBox(10, 0, 50, 30));
  p[0].location.x = 10;
  p[3].location.x = 10;
  p[6].location.x = 16;
  p[0].confidence = 1.0;
  p[3].confidence = 1.0;
  p[6].confidence = 0.5;
  EXPECT_NEAR(points_to_box(p, kLayout).x1(), 11.2, 1e-12);
}

TEST(PointsToBox, ZeroConfidenceSideIsUndecodable) {
  DecodedPoints p = points_on(BBox(10, 0, 50, 30));
  p[2].confidence = 0.0;
  p[5].confidence = 0.0;
  p[8].confidence = 0.0;
  try {
    points_to_box(p, kLayout);
    FAIL() << "expected UndecodableBoxError";
  } catch (const UndecodableBoxError& e) {
    EXPECT_NE(std::string(e.what()).find("undecodable box"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("right"), std::string::npos);
  }
}

TEST(PointsToBox, WrongPointCountRejected) {
  EXPECT_THROW(points_to_box(DecodedPoints(4), kLayout), std::invalid_argument);
}

TEST(GridcodecProperty, MappingRoundTrip) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = 500 * u(rng);
    const double y = 500 * u(rng);
    const BBox prop(x, y, x + 1 + 200 * u(rng), y + 1 + 200 * u(rng));
    const double ratio = 1.0 + 2.0 * u(rng);
    const BBox r = expand(prop, ratio);
    const Point2 p{r.x1() + u(rng) * r.width(), r.y1() + u(rng) * r.height()};
    const Point2 q = cell_to_image(image_to_cell(p, prop, ratio, 28), prop, ratio, 28);
    ASSERT_LT(std::hypot(q.x - p.x, q.y - p.y), 1e-9);
  }
}

TEST(GridcodecProperty, EncodeDecodeWithinQuantizationBound) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int s = kLayout.resolution;
  for (int i = 0; i < 10000; ++i) {
    const double x = 300 * u(rng);
    const double y = 300 * u(rng);
    const BBox prop(x, y, x + 4 + 150 * u(rng), y + 4 + 150 * u(rng));
    const double ratio = 1.0 + 2.0 * u(rng);
    const double gw = prop.width() * (0.5 + u(rng));
    const double gh = prop.height() * (0.5 + u(rng));
    const BBox gt = BBox::from_center(prop.center_x() + prop.width() * (u(rng) - 0.5),
                                      prop.center_y() + prop.height() * (u(rng) - 0.5), gw, gh);
    const HeatmapSet t = encode_target(gt, prop, ratio, kLayout);
    const auto decoded = decode_points(t);
    const BBox r = expand(prop, ratio);
    const double bound = std::max(r.width(), r.height()) / s;
    const auto pts = grid_points(gt);
    for (int k = 0; k < kGridPoints; ++k) {
      const auto& p = pts[static_cast<std::size_t>(k)];
      const CellPoint c = image_to_cell(p, prop, ratio, s);
      ASSERT_EQ(t.masked(k), !in_closed_region(c, s)) << "case " << i << " point " << k;
      if (t.masked(k)) continue;
      const auto& d = decoded[static_cast<std::size_t>(k)];
      ASSERT_LE(std::abs(d.location.x - p.x), bound + 1e-9) << "case " << i << " point " << k;
      ASSERT_LE(std::abs(d.location.y - p.y), bound + 1e-9) << "case " << i << " point " << k;
    }
    ASSERT_NO_THROW(t.validate());
  }
}

TEST(GridcodecProperty, ConsistentPointsExact) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = 400 * u(rng);
    const double y = 400 * u(rng);
    const BBox b(x, y, x + 0.1 + 300 * u(rng), y + 0.1 + 300 * u(rng));
    const BBox d = points_to_box(points_on(b, 0.05 + u(rng)), kLayout);
    for (int c = 0; c < 4; ++c) ASSERT_NEAR(d.coords()[c], b.coords()[c], 1e-9);
  }
}

TEST(GridcodecProperty, InRegionMonotoneInRatio) {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = 100 + 100 * u(rng);
    const double y = 100 + 100 * u(rng);
    const BBox prop(x, y, x + 1 + 80 * u(rng), y + 1 + 80 * u(rng));
    const Point2 p{x - 100 + 300 * u(rng), y - 100 + 300 * u(rng)};
    const double r1 = 1.0 + 2.0 * u(rng);
    const double r2 = r1 + 2.0 * u(rng);
    if (in_closed_region(image_to_cell(p, prop, r1, 28), 28)) {
      ASSERT_TRUE(in_closed_region(image_to_cell(p, prop, r2, 28), 28)) << "case " << i;
    }
  }
}
