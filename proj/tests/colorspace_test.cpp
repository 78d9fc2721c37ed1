#include "colorname/colorspace.hpp"

#include <gtest/gtest.h>

#include "colorname/random.hpp"

namespace colorname {
namespace {

// Expected values below were evaluated from the conversion formulas with
// 40-digit arithmetic (mpmath), independently of this implementation.

TEST(RgbToLab, WhiteMapsToFullLightness) {
  const ColorLab white = rgb_to_lab({255, 255, 255});
  // Unclamped L is 100.0000038667; the Lab box clamps it to 100.
  EXPECT_EQ(white.L(), 100.0);
  EXPECT_LE(std::abs(white.a()), 0.05);
  EXPECT_LE(std::abs(white.b()), 0.05);
  EXPECT_NEAR(white.a(), 0.012258565077660407, 1e-9);
  EXPECT_NEAR(white.b(), -0.0018302011067322061, 1e-9);
}

TEST(RgbToLab, BlackIsOrigin) {
  const ColorLab black = rgb_to_lab({0, 0, 0});
  EXPECT_NEAR(black.L(), 0.0, 1e-12);
  EXPECT_NEAR(black.a(), 0.0, 1e-12);
  EXPECT_NEAR(black.b(), 0.0, 1e-12);
}

TEST(RgbToLab, MiddleGrayMatchesHighPrecisionOracle) {
  const ColorLab gray = rgb_to_lab({128, 128, 128});
  EXPECT_NEAR(gray.L(), 76.189459081333642, 1e-9);
  EXPECT_NEAR(gray.a(), 0.0097423314306249372, 1e-9);
  EXPECT_NEAR(gray.b(), -0.0014545279690993589, 1e-9);
}

TEST(RgbToLab, SaturatedColorsMatchOracle) {
  const ColorLab orange = rgb_to_lab({255, 153, 0});
  EXPECT_NEAR(orange.L(), 84.057540349435539, 1e-9);
  EXPECT_NEAR(orange.a(), 3.9862780252924731, 1e-9);
  EXPECT_NEAR(orange.b(), 85.117816539682525, 1e-9);
  const ColorLab green = rgb_to_lab({12, 200, 77});
  EXPECT_NEAR(green.L(), 81.440100960279546, 1e-9);
  EXPECT_NEAR(green.a(), -60.131835562505286, 1e-9);
  EXPECT_NEAR(green.b(), 27.021126540106771, 1e-9);
}

TEST(RgbToLab, DarkBranchOfTheCubeRoot) {
  // y = 1/255 falls below the 0.008856 threshold: linear branch.
  const ColorLab c = rgb_to_lab({1, 1, 1});
  EXPECT_NEAR(c.L(), 3.5423532954117647, 1e-9);
}

TEST(RgbToLab, GraysAreAchromaticAndMonotone) {
  double previous = -1.0;
  for (int v = 0; v <= 255; ++v) {
    const auto g = static_cast<std::uint8_t>(v);
    const ColorLab c = rgb_to_lab({g, g, g});
    EXPECT_LE(std::abs(c.a()), 0.05) << v;
    EXPECT_LE(std::abs(c.b()), 0.05) << v;
    EXPECT_GT(c.L(), previous) << v;
    previous = c.L();
  }
}

TEST(LabToRgb, InvertsWhiteAndBlack) {
  const ColorRGB white = lab_to_rgb({100, 0, 0});
  EXPECT_GE(white.r, 254);
  EXPECT_GE(white.g, 254);
  EXPECT_GE(white.b, 254);
  EXPECT_EQ(lab_to_rgb({0, 0, 0}), (ColorRGB{0, 0, 0}));
}

TEST(LabToRgb, RoundTripsInGamutColors) {
  EXPECT_EQ(lab_to_rgb(rgb_to_lab({12, 200, 77})), (ColorRGB{12, 200, 77}));
  Rng rng(7);
  for (int i = 0; i < 20000; ++i) {
    const ColorRGB c{static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
                     static_cast<std::uint8_t>(rng.below(256))};
    const auto back = lab_to_rgb_checked(rgb_to_lab(c));
    EXPECT_FALSE(back.clamped);
    EXPECT_LE(std::abs(back.rgb.r - c.r), 1);
    EXPECT_LE(std::abs(back.rgb.g - c.g), 1);
    EXPECT_LE(std::abs(back.rgb.b - c.b), 1);
  }
}

TEST(LabToRgb, OutOfGamutIsClampedAndFlagged) {
  const auto r = lab_to_rgb_checked({50, 127, -128});
  EXPECT_TRUE(r.clamped);
  const auto inside = lab_to_rgb_checked(rgb_to_lab({40, 90, 200}));
  EXPECT_FALSE(inside.clamped);
}

TEST(RgbModel, SrgbSwitchRoundTripsAndDiffersFromLinear) {
  const ColorRGB c{90, 140, 30};
  const ColorLab s = rgb_to_lab(c, RgbModel::srgb);
  const ColorLab l = rgb_to_lab(c, RgbModel::linear);
  EXPECT_GT(std::abs(s.L() - l.L()), 1.0);
  EXPECT_EQ(lab_to_rgb(s, RgbModel::srgb), c);
  EXPECT_NEAR(rgb_to_lab({255, 255, 255}, RgbModel::srgb).L(), 100.0, 1e-9);
}

TEST(LabDistance, SimpleCases) {
  const ColorLab x{40, 10, -20};
  EXPECT_EQ(lab_distance(x, x), 0.0);
  EXPECT_DOUBLE_EQ(lab_distance({0, 0, 0}, {100, 0, 0}), 100.0);
  EXPECT_DOUBLE_EQ(lab_distance({10, 3, -4}, {13, 7, 8}), 13.0);
}

TEST(LabDistance, IsAMetricOnRandomTriples) {
  Rng rng(11);
  auto random_lab = [&] { return ColorLab{rng.uniform(0, 100), rng.uniform(-128, 127), rng.uniform(-128, 127)}; };
  for (int i = 0; i < 2000; ++i) {
    const ColorLab p = random_lab(), q = random_lab(), r = random_lab();
    EXPECT_DOUBLE_EQ(lab_distance(p, q), lab_distance(q, p));
    EXPECT_GE(lab_distance(p, q), 0.0);
    EXPECT_LE(lab_distance(p, r), lab_distance(p, q) + lab_distance(q, r) + 1e-12);
  }
}

TEST(GrayReference, IsCachedMiddleGray) {
  const ColorLab& g = gray_reference();
  EXPECT_EQ(g, rgb_to_lab({128, 128, 128}));
  EXPECT_NEAR(g.L(), 76.2, 0.05);
  EXPECT_LT(std::abs(g.a()), 0.05);
  EXPECT_EQ(&g, &gray_reference());
}

TEST(ColorLab, ClampsIntoTheBox) {
  const ColorLab c{120, -300, 400};
  EXPECT_EQ(c.L(), 100.0);
  EXPECT_EQ(c.a(), -128.0);
  EXPECT_EQ(c.b(), 127.0);
}

TEST(UnitCube, AffineMapsCornersAndCenter) {
  const ColorLab center = unit_to_lab(0.5, 0.5, 0.5);
  EXPECT_DOUBLE_EQ(center.L(), 50.0);
  EXPECT_DOUBLE_EQ(center.a(), 0.0);
  EXPECT_DOUBLE_EQ(center.b(), 0.0);
  const auto u = lab_to_unit({25, -127, 127});
  EXPECT_DOUBLE_EQ(u[0], 0.25);
  EXPECT_DOUBLE_EQ(u[1], 0.0);
  EXPECT_DOUBLE_EQ(u[2], 1.0);
}

TEST(Hex, ParseAndFormat) {
  EXPECT_EQ(parse_hex("#FF9900"), (ColorRGB{255, 153, 0}));
  EXPECT_EQ(parse_hex("ff9900"), (ColorRGB{255, 153, 0}));
  EXPECT_EQ(parse_hex("#aBcDeF"), (ColorRGB{0xAB, 0xCD, 0xEF}));
  EXPECT_EQ(to_hex({255, 153, 0}), "#FF9900");
  EXPECT_THROW(parse_hex("#FF99"), std::invalid_argument);
  EXPECT_THROW(parse_hex("#GG9900"), std::invalid_argument);
}

}  // namespace
}  // namespace colorname
