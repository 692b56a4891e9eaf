#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "occbranch/annotation.hpp"
#include "occbranch/error.hpp"
#include "occbranch/synthdata.hpp"

using namespace occbranch;
using namespace occbranch::annotation;
using synth::Canvas;
using synth::Point;
using synth::Polyline;

namespace {

RgbImage gradient_image(int w, int h) {
  RgbImage img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>((x * 7 + y * 3 + c * 50) % 256);
  return img;
}

std::vector<std::string> make_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
  return ids;
}

}  // namespace

TEST(PolylineToTarget, VerticalLine) {
  const PositionTarget t = polyline_to_target({{{10, 0}, {10, 31}}}, {32, 32}, 1);
  ASSERT_EQ(t.height, 32);
  for (int r = 0; r < 32; ++r) {
    ASSERT_TRUE(t.is_valid(0, r));
    EXPECT_EQ(t.coord(0, r), 10.0);
  }
}

TEST(PolylineToTarget, JoinedBranchesShareCoordinate) {
  const Polyline left = {{4, 0}, {16, 20}, {16, 31}};
  const Polyline right = {{28, 0}, {16, 20}, {16, 31}};
  const PositionTarget t = polyline_to_target({left, right}, {32, 32}, 2);
  for (int r = 0; r < 20; ++r) EXPECT_LT(t.coord(0, r), t.coord(1, r));
  for (int r = 20; r < 32; ++r) {
    EXPECT_EQ(t.coord(0, r), t.coord(1, r)) << r;
    EXPECT_EQ(t.coord(0, r), 16.0);
  }
  EXPECT_EQ(check_target_invariants(t), "");
}

TEST(PolylineToTarget, SingleChannelReceivesSharedLocation) {
  // One branch but two channels: the only location goes to both.
  const PositionTarget t = polyline_to_target({{{7, 0}, {9, 31}}}, {32, 32}, 2);
  for (int r = 0; r < 32; ++r) EXPECT_EQ(t.coord(0, r), t.coord(1, r));
}

TEST(PolylineToTarget, DiagonalMatchesLineEquation) {
  const PositionTarget t = polyline_to_target({{{0, 0}, {31, 31}}}, {32, 32}, 1);
  for (int r = 0; r < 32; ++r) EXPECT_NEAR(t.coord(0, r), static_cast<double>(r), 1e-12);
}

TEST(PolylineToTarget, PartialSpanInvalidatesUncoveredRows) {
  const PositionTarget t = polyline_to_target({{{12, 5.5}, {12, 20}}}, {32, 32}, 1);
  for (int r = 0; r < 32; ++r) EXPECT_EQ(t.is_valid(0, r), r >= 6 && r <= 20) << r;
  EXPECT_EQ(check_target_invariants(t), "");
}

TEST(PolylineToTarget, ColumnScanForVines) {
  const PositionTarget t = polyline_to_target({{{0, 3}, {31, 34}}}, {32, 40}, 1, true);
  ASSERT_EQ(t.height, 32);
  ASSERT_EQ(t.width, 40);
  for (int c = 0; c < 32; ++c) EXPECT_NEAR(t.coord(0, c), c + 3.0, 1e-12);
}

TEST(PolylineToTarget, RejectsNonMonotoneAndExcessBranches) {
  EXPECT_THROW(polyline_to_target({{{5, 0}, {6, 12}, {7, 9}, {8, 31}}}, {32, 32}, 1), NonScannableGeometry);
  EXPECT_THROW(polyline_to_target({{{5, 0}, {5, 31}}, {{9, 0}, {9, 31}}}, {32, 32}, 1), Error);
}

TEST(HFlip, CoordinateArithmetic) {
  PositionTarget t(1, 64, 4);
  for (int r = 0; r < 4; ++r) t.set(0, r, 10.0);
  const PositionTarget f = hflip(t);
  for (int r = 0; r < 4; ++r) EXPECT_EQ(f.coord(0, r), 53.0);
}

TEST(HFlip, IsAnInvolutionAndKeepsLeftFirst) {
  for (int seed = 0; seed < 10; ++seed) {
    const auto scene = synth::generate_scene(synth::TreeKind::y_shaped, {64, 64}, synth::OcclusionRegime::medium, seed);
    const auto bundle = synth::rasterize(scene);
    const auto [img, tgt] = hflip(bundle.image, bundle.target);
    EXPECT_NE(img, bundle.image);
    for (int r = 0; r < 64; ++r) {
      EXPECT_LE(tgt.coord(0, r), tgt.coord(1, r));
      if (r >= scene.merge_row) {
        EXPECT_EQ(tgt.coord(0, r), tgt.coord(1, r));
      }
    }
    EXPECT_EQ(check_target_invariants(tgt), "");
    const auto [img2, tgt2] = hflip(img, tgt);
    EXPECT_EQ(img2, bundle.image);
    EXPECT_EQ(tgt2.valid, bundle.target.valid);
    for (std::size_t i = 0; i < tgt2.coords.size(); ++i) EXPECT_NEAR(tgt2.coords[i], bundle.target.coords[i], 1e-12);
  }
}

TEST(HFlip, SymmetricTreeIsFixed) {
  const Polyline left = {{20, 0}, {31.5, 30}, {31.5, 63}};
  const Polyline right = {{43, 0}, {31.5, 30}, {31.5, 63}};
  const PositionTarget t = polyline_to_target({left, right}, {64, 64}, 2);
  const PositionTarget f = hflip(t);
  for (int r = 0; r < 64; ++r)
    for (int b = 0; b < 2; ++b) EXPECT_NEAR(f.coord(b, r), t.coord(b, r), 1e-12);
}

TEST(Translate, PixelsRepeatTheNearestEdge) {
  const RgbImage img = gradient_image(12, 10);
  const RgbImage out = translate(img, 2, -1);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 12; ++x)
      for (int c = 0; c < 3; ++c)
        ASSERT_EQ(out.at(x, y, c), img.at(std::clamp(x - 2, 0, 11), std::clamp(y + 1, 0, 9), c));
  EXPECT_EQ(translate(img, 0, 0), img);
}

TEST(Translate, TargetsMoveWithTheImage) {
  PositionTarget t(2, 12, 10);
  for (int r = 0; r < 10; ++r) {
    t.set(0, r, 1.5 + 0.2 * r);
    t.set(1, r, 10.5);
  }
  const PositionTarget out = translate(t, 2, 3);
  for (int r = 0; r < 3; ++r) EXPECT_FALSE(out.is_valid(0, r) || out.is_valid(1, r));
  for (int r = 3; r < 10; ++r) {
    EXPECT_DOUBLE_EQ(out.coord(0, r), t.coord(0, r - 3) + 2);
    EXPECT_FALSE(out.is_valid(1, r));  // 12.5 is past the last column
  }
  const PositionTarget left = translate(t, -2, 0);
  EXPECT_FALSE(left.is_valid(0, 0));  // 1.5 - 2 leaves the canvas
  EXPECT_TRUE(left.is_valid(0, 5));
  const PositionTarget back = translate(translate(t, -1, -2), 1, 2);
  for (int r = 2; r < 10; ++r) {
    EXPECT_DOUBLE_EQ(back.coord(0, r), t.coord(0, r));
    EXPECT_DOUBLE_EQ(back.coord(1, r), t.coord(1, r));
  }
}

TEST(Crop, WindowPlacement) {
  EXPECT_EQ(crop_window(100, 100, CropAnchor::top, 0.8).y0, 0);
  EXPECT_EQ(crop_window(100, 100, CropAnchor::center, 0.8).y0, 10);
  EXPECT_EQ(crop_window(100, 100, CropAnchor::bottom, 0.8).y0, 20);
  EXPECT_EQ(crop_window(100, 100, CropAnchor::center, 0.8).side, 80);
  EXPECT_EQ(crop_window(100, 100, CropAnchor::center, 0.8).x0, 10);
  EXPECT_THROW(crop_window(100, 100, CropAnchor::top, 0.0), InvalidCrop);
  EXPECT_THROW(crop_window(100, 100, CropAnchor::top, 1.2), InvalidCrop);
  EXPECT_THROW(crop_window(120, 100, CropAnchor::top, 1.0), InvalidCrop);
}

TEST(Crop, OffsetSubtractionAtUnitScale) {
  // 100x100, ratio 0.8: window starts at column 10; keep the side (scale 1).
  PositionTarget t(1, 100, 100);
  for (int r = 0; r < 100; ++r) t.set(0, r, 40.0);
  const auto [img, out] = crop_augment(gradient_image(100, 100), t, CropAnchor::top, 0.8);
  ASSERT_EQ(img.width, 80);
  ASSERT_EQ(out.height, 80);
  for (int r = 0; r < 80; ++r) {
    ASSERT_TRUE(out.is_valid(0, r));
    EXPECT_NEAR(out.coord(0, r), 30.0, 1e-9);
  }
  // Pixels are an exact copy of the window at scale 1.
  EXPECT_EQ(img.at(0, 0, 1), gradient_image(100, 100).at(10, 0, 1));
}

TEST(Crop, FullRatioIsIdentity) {
  const RgbImage image = gradient_image(48, 48);
  PositionTarget t(1, 48, 48);
  for (int r = 0; r < 48; ++r) t.set(0, r, 3.0 + 0.5 * r);
  for (auto anchor : {CropAnchor::top, CropAnchor::center, CropAnchor::bottom}) {
    const auto [img, out] = crop_augment(image, t, anchor, 1.0, 48);
    EXPECT_EQ(img, image);
    for (int r = 0; r < 48; ++r) EXPECT_NEAR(out.coord(0, r), t.coord(0, r), 1e-9);
  }
}

TEST(Crop, ResampledCropKeepsInvariants) {
  for (int seed = 0; seed < 5; ++seed) {
    const auto scene = synth::generate_scene(synth::TreeKind::y_shaped, {64, 64}, synth::OcclusionRegime::heavy, seed);
    const auto bundle = synth::rasterize(scene);
    for (auto anchor : {CropAnchor::top, CropAnchor::center, CropAnchor::bottom}) {
      const auto [img, out] = crop_augment(bundle.image, bundle.target, anchor, 0.8, 64);
      EXPECT_EQ(img.width, 64);
      EXPECT_EQ(check_target_invariants(out), "");
      // Output row r maps back to source row y0 + (r + 0.5) * 51/64 - 0.5.
      const CropWindow w = crop_window(64, 64, anchor, 0.8);
      const double s = static_cast<double>(w.side) / 64.0;
      for (int r = 0; r < 64; ++r) {
        if (!out.is_valid(0, r)) continue;
        const double src_row = w.y0 + (r + 0.5) * s - 0.5;
        double expected;
        ASSERT_TRUE(synth::polyline_position(scene.branches[0], false, src_row, expected));
        EXPECT_NEAR(out.coord(0, r), (expected - w.x0 + 0.5) / s - 0.5, 1e-9);
      }
    }
  }
}

TEST(Split, EvenGroups) {
  const auto a = split_cv_groups(make_ids(10), 5, 1);
  std::map<int, int> sizes;
  for (const auto& [id, g] : a) ++sizes[g];
  ASSERT_EQ(sizes.size(), 5u);
  for (const auto& [g, n] : sizes) EXPECT_EQ(n, 2);
}

TEST(Split, FullDatasetSizes) {
  const auto a = split_cv_groups(make_ids(2178), 5, 9);
  std::multiset<int> sizes;
  std::map<int, int> counts;
  for (const auto& [id, g] : a) ++counts[g];
  for (const auto& [g, n] : counts) sizes.insert(n);
  EXPECT_EQ(sizes, (std::multiset<int>{435, 435, 436, 436, 436}));
}

TEST(Split, DeterministicPartition) {
  const auto ids = make_ids(97);
  const auto a = split_cv_groups(ids, 7, 3);
  EXPECT_EQ(a, split_cv_groups(ids, 7, 3));
  EXPECT_NE(a, split_cv_groups(ids, 7, 4));
  ASSERT_EQ(a.size(), ids.size());
  for (const auto& id : ids) {
    ASSERT_TRUE(a.count(id));
    EXPECT_GE(a.at(id), 1);
    EXPECT_LE(a.at(id), 7);
  }
  EXPECT_THROW(split_cv_groups(make_ids(3), 5, 1), TooFewSamples);
  EXPECT_THROW(split_cv_groups(make_ids(10), 1, 1), Error);
}
