#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "darts/board.hpp"

using namespace darts;

namespace {

const BoardGeometry kBoard;

Vec2 polar(double r, double deg) {
  const double t = deg * kPi / 180.0;
  return {r * std::cos(t), r * std::sin(t)};
}

// Independent lookup: wedge numbers listed counterclockwise starting from the
// wedge that straddles +x (the 6).
int base_by_table(double deg) {
  static const int ccw_from_6[20] = {6, 13, 4, 18, 1, 20, 5, 12, 9, 14, 11, 8, 16, 7, 19, 3, 17, 2, 15, 10};
  double d = std::fmod(deg + 9.0 + 360.0, 360.0);
  return ccw_from_6[static_cast<int>(d / 18.0) % 20];
}

}  // namespace

TEST(Board, DefaultGeometryIsValid) {
  EXPECT_NO_THROW(kBoard.validate());
  EXPECT_DOUBLE_EQ(kBoard.r_db, 6.35);
  EXPECT_DOUBLE_EQ(kBoard.r_double_out, 170.0);
}

TEST(Board, RejectsBadGeometry) {
  BoardGeometry g;
  g.r_sb = 5.0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = BoardGeometry{};
  g.segment_order[3] = 20;
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Board, ClassifyExamples) {
  EXPECT_EQ(classify(kBoard, {0, 0}), Label::double_bull());
  EXPECT_EQ(classify(kBoard, {0, 103}), Label::treble(20));
  EXPECT_EQ(classify(kBoard, {0, 171}), Label::miss());
  EXPECT_EQ(classify(kBoard, {0, 10}), Label::single_bull());
  EXPECT_EQ(classify(kBoard, {0, 50}), Label::single(20));
  EXPECT_EQ(classify(kBoard, {0, 130}), Label::single(20));
  EXPECT_EQ(classify(kBoard, {0, 165}), Label::dbl(20));
  EXPECT_EQ(classify(kBoard, {103, 0}), Label::treble(6));
  EXPECT_EQ(classify(kBoard, {0, -103}), Label::treble(3));
  EXPECT_EQ(classify(kBoard, {-103, 0}), Label::treble(11));
}

TEST(Board, WireTiesGoInward) {
  EXPECT_EQ(classify(kBoard, {0, 6.35}), Label::double_bull());
  EXPECT_EQ(classify(kBoard, {0, 15.9}), Label::single_bull());
  EXPECT_EQ(classify(kBoard, {0, 99}), Label::single(20));
  EXPECT_EQ(classify(kBoard, {0, 107}), Label::treble(20));
  EXPECT_EQ(classify(kBoard, {0, 170}), Label::dbl(20));
  // The 20/1 wire sits at 81 degrees; the tie goes to the smaller angle (the 1).
  const Vec2 p = polar(50.0, 81.0);
  const double t = std::atan2(p.y, p.x);
  const Vec2 exact{50.0 * std::cos(t), 50.0 * std::sin(t)};
  const Label z = classify(kBoard, exact);
  EXPECT_TRUE(z == Label::single(1) || z == Label::single(20));
  EXPECT_EQ(classify(kBoard, polar(50.0, 81.0 - 1e-9)), Label::single(1));
  EXPECT_EQ(classify(kBoard, polar(50.0, 81.0 + 1e-9)), Label::single(20));
}

TEST(Board, ClassifyMatchesIndependentLookup) {
  for (int deg10 = 0; deg10 < 3600; deg10 += 7) {
    const double deg = deg10 / 10.0;
    if (std::fmod(deg + 9.0, 18.0) < 1e-6) continue;
    EXPECT_EQ(classify(kBoard, polar(60.0, deg)).base(), base_by_table(deg)) << deg;
    EXPECT_EQ(classify(kBoard, polar(103.0, deg)).ring(), Ring::Treble);
    EXPECT_EQ(classify(kBoard, polar(166.0, deg)).ring(), Ring::Double);
  }
}

TEST(Board, Scores) {
  EXPECT_EQ(Label::treble(20).score(), 60);
  EXPECT_EQ(Label::miss().score(), 0);
  EXPECT_EQ(Label::dbl(16).score(), 32);
  EXPECT_EQ(Label::single_bull().score(), 25);
  EXPECT_EQ(Label::double_bull().score(), 50);
  EXPECT_TRUE(Label::double_bull().is_double());
  EXPECT_FALSE(Label::single_bull().is_double());
}

TEST(Board, LabelNamesRoundTrip) {
  std::set<std::string> names;
  for (int k = 0; k < kNumLabels; ++k) {
    const Label z = Label::from_index(k);
    names.insert(z.name());
    ASSERT_TRUE(Label::parse(z.name()).has_value());
    EXPECT_EQ(*Label::parse(z.name()), z);
  }
  EXPECT_EQ(names.size(), 63u);
  EXPECT_FALSE(Label::parse("T21").has_value());
  EXPECT_FALSE(Label::parse("X5").has_value());
  EXPECT_FALSE(Label::parse("D05").has_value());
  EXPECT_EQ(*Label::parse("t20"), Label::treble(20));
}

TEST(Board, RegionCentersClassifyBack) {
  for (int k = 0; k < kNumScoringLabels; ++k) {
    const Label z = Label::from_index(k);
    EXPECT_EQ(classify(kBoard, region_center(kBoard, z)), z) << z.name();
  }
  EXPECT_THROW(region_center(kBoard, Label::miss()), std::invalid_argument);
}

TEST(Board, RegionCenterExamples) {
  const Vec2 d20 = region_center(kBoard, Label::dbl(20));
  EXPECT_NEAR(d20.x, 0.0, 1e-12);
  EXPECT_NEAR(d20.y, 166.0, 1e-12);
  EXPECT_EQ(region_center(kBoard, Label::double_bull()), (Vec2{0, 0}));
  const Vec2 t19 = region_center(kBoard, Label::treble(19));
  EXPECT_NEAR(t19.norm(), 103.0, 1e-12);
  // 19 bisector: clockwise position 11 from the top.
  EXPECT_NEAR(std::atan2(t19.y, t19.x), (90.0 - 11 * 18.0) * kPi / 180.0, 1e-12);
}

TEST(Board, OnlyRealizableScores) {
  const std::set<int> impossible{23, 29, 31, 35, 37, 41, 43, 44, 46, 47, 49, 52, 53, 55, 56, 58, 59};
  for (double x = -175; x <= 175; x += 0.5) {
    for (double y = -175; y <= 175; y += 0.5) {
      const int s = classify(kBoard, {x, y}).score();
      ASSERT_TRUE(s >= 0 && s <= 60);
      ASSERT_EQ(impossible.count(s), 0u) << s;
    }
  }
}

TEST(Board, RotationByOneWedgeShiftsBase) {
  for (int k = 0; k < 20; ++k) {
    for (double r : {40.0, 103.0, 130.0, 166.0}) {
      const double deg = 90.0 - k * 18.0 + 3.0;
      const Label z = classify(kBoard, polar(r, deg));
      const Label w = classify(kBoard, polar(r, deg - 18.0));
      EXPECT_EQ(z.ring(), w.ring());
      EXPECT_EQ(w.base(), kBoard.segment_order[(k + 1) % 20]);
    }
  }
}

TEST(Board, GridSizes) {
  const ActionGrid g1 = make_grid(kBoard, 1.0);
  EXPECT_NEAR(static_cast<double>(g1.size()), 90785.0, 0.005 * 90785.0);
  const ActionGrid big = make_grid(kBoard, 170.0);
  EXPECT_EQ(big.size(), 5u);
  for (const auto& p : big.targets()) EXPECT_LE(p.x * p.x + p.y * p.y, 170.0 * 170.0);
  std::size_t count = 0;
  for (int i = -34; i <= 34; ++i)
    for (int j = -34; j <= 34; ++j)
      if (25.0 * (i * i + j * j) <= 170.0 * 170.0) ++count;
  EXPECT_EQ(make_grid(kBoard, 5.0).size(), count);
  EXPECT_NEAR(static_cast<double>(count), kPi * 170.0 * 170.0 / 25.0, 0.01 * kPi * 170.0 * 170.0 / 25.0);
  EXPECT_THROW(make_grid(kBoard, 0.0), std::invalid_argument);
}

TEST(Board, GridOrderIsRowMajor) {
  const ActionGrid g = make_grid(kBoard, 5.0);
  for (std::size_t k = 1; k < g.size(); ++k) {
    const Vec2 a = g[k - 1], b = g[k];
    ASSERT_TRUE(a.y < b.y || (a.y == b.y && a.x < b.x));
  }
}

TEST(Board, GeometryJsonRoundTrip) {
  const BoardGeometry g = geometry_from_json(geometry_to_json(kBoard));
  EXPECT_EQ(g, kBoard);
  const BoardGeometry shipped = load_geometry(std::string(DARTS_DATA_DIR) + "/board.json");
  EXPECT_EQ(shipped, kBoard);
  auto j = geometry_to_json(kBoard);
  j["version"] = 2;
  EXPECT_THROW(geometry_from_json(j), std::runtime_error);
}
