#pragma once

// RGB <-> CIE Lab conversion and Lab geometry.
//
// The default transform applies the RGB->XYZ matrix directly to channels
// scaled to [0,1] (no sRGB companding) and uses the rounded white point
// (0.9504, 1, 1.0888). RgbModel::srgb switches on the standard sRGB gamma for
// interoperability with other tools.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace colorname {

struct ColorRGB {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const ColorRGB&, const ColorRGB&) = default;
};

/// A point in Lab, clamped into the box L in [0,100], a,b in [-128,127] on
/// construction.
class ColorLab {
 public:
  static constexpr double kMinL = 0.0;
  static constexpr double kMaxL = 100.0;
  static constexpr double kMinAB = -128.0;
  static constexpr double kMaxAB = 127.0;

  constexpr ColorLab() = default;
  constexpr ColorLab(double L, double a, double b)
      : L_(std::clamp(L, kMinL, kMaxL)),
        a_(std::clamp(a, kMinAB, kMaxAB)),
        b_(std::clamp(b, kMinAB, kMaxAB)) {}

  constexpr double L() const { return L_; }
  constexpr double a() const { return a_; }
  constexpr double b() const { return b_; }
  constexpr std::array<double, 3> values() const { return {L_, a_, b_}; }

  friend constexpr bool operator==(const ColorLab&, const ColorLab&) = default;

 private:
  double L_ = 0.0;
  double a_ = 0.0;
  double b_ = 0.0;
};

enum class RgbModel { linear, srgb };

namespace detail {

inline constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};
inline constexpr double kWhiteX = 0.9504;
inline constexpr double kWhiteZ = 1.0888;
inline constexpr double kEpsilon = 0.008856;
inline constexpr double kKappa = 903.3;

inline double lab_f(double t) {
  return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0;
}

inline double lab_f_inverse(double f) {
  static const double threshold = std::cbrt(kEpsilon);
  return f > threshold ? f * f * f : (116.0 * f - 16.0) / kKappa;
}

inline double srgb_decode(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline double srgb_encode(double v) {
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

/// Inverse of kRgbToXyz, computed once by cofactor expansion.
inline const std::array<std::array<double, 3>, 3>& xyz_to_rgb() {
  static const auto inv = [] {
    const auto& m = kRgbToXyz;
    std::array<std::array<double, 3>, 3> r{};
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return r;
  }();
  return inv;
}

}  // namespace detail

inline ColorLab rgb_to_lab(ColorRGB c, RgbModel model = RgbModel::linear) {
  double v[3] = {c.r / 255.0, c.g / 255.0, c.b / 255.0};
  if (model == RgbModel::srgb) {
    for (double& x : v) x = detail::srgb_decode(x);
  }
  double xyz[3];
  for (int i = 0; i < 3; ++i) {
    xyz[i] = detail::kRgbToXyz[i][0] * v[0] + detail::kRgbToXyz[i][1] * v[1] +
             detail::kRgbToXyz[i][2] * v[2];
  }
  const double fx = detail::lab_f(xyz[0] / detail::kWhiteX);
  const double fy = detail::lab_f(xyz[1]);
  const double fz = detail::lab_f(xyz[2] / detail::kWhiteZ);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

struct LabToRgbResult {
  ColorRGB rgb;
  bool clamped = false;  // some channel fell outside [0,255] before clamping
};

inline LabToRgbResult lab_to_rgb_checked(const ColorLab& c,
                                         RgbModel model = RgbModel::linear) {
  const double fy = (c.L() + 16.0) / 116.0;
  const double fx = fy + c.a() / 500.0;
  const double fz = fy - c.b() / 200.0;
  const double xyz[3] = {detail::lab_f_inverse(fx) * detail::kWhiteX,
                         detail::lab_f_inverse(fy),
                         detail::lab_f_inverse(fz) * detail::kWhiteZ};
  const auto& inv = detail::xyz_to_rgb();
  LabToRgbResult out;
  std::uint8_t channels[3];
  for (int i = 0; i < 3; ++i) {
    double v = inv[i][0] * xyz[0] + inv[i][1] * xyz[1] + inv[i][2] * xyz[2];
    if (model == RgbModel::srgb) v = detail::srgb_encode(std::max(v, 0.0));
    double scaled = std::round(v * 255.0);
    if (scaled < 0.0 || scaled > 255.0 || !std::isfinite(scaled)) {
      out.clamped = true;
      scaled = std::isfinite(scaled) ? std::clamp(scaled, 0.0, 255.0) : 0.0;
    }
    channels[i] = static_cast<std::uint8_t>(scaled);
  }
  out.rgb = {channels[0], channels[1], channels[2]};
  return out;
}

inline ColorRGB lab_to_rgb(const ColorLab& c, RgbModel model = RgbModel::linear) {
  return lab_to_rgb_checked(c, model).rgb;
}

inline double lab_distance(const ColorLab& p, const ColorLab& q) {
  const double dL = p.L() - q.L();
  const double da = p.a() - q.a();
  const double db = p.b() - q.b();
  return std::sqrt(dL * dL + da * da + db * db);
}

/// Lab image of RGB (128,128,128).
inline const ColorLab& gray_reference() {
  static const ColorLab gray = rgb_to_lab({128, 128, 128});
  return gray;
}

// The regressors and decoders work in the unit cube; this fixed affine maps
// it onto the Lab box: L = 100 y1, a = 254 y2 - 127, b = 254 y3 - 127.
inline std::array<double, 3> lab_to_unit(const ColorLab& c) {
  return {c.L() / 100.0, (c.a() + 127.0) / 254.0, (c.b() + 127.0) / 254.0};
}

inline ColorLab unit_to_lab(double y1, double y2, double y3) {
  return {100.0 * y1, 254.0 * y2 - 127.0, 254.0 * y3 - 127.0};
}

/// Parses "#RRGGBB" (leading '#' optional, case-insensitive).
inline ColorRGB parse_hex(std::string_view text) {
  if (!text.empty() && text.front() == '#') text.remove_prefix(1);
  if (text.size() != 6) throw std::invalid_argument("bad hex color: expected 6 digits");
  auto nibble = [](char ch) -> int {
    if (ch >= '0' && ch <= '9') return ch - '0';
    if (ch >= 'a' && ch <= 'f') return ch - 'a' + 10;
    if (ch >= 'A' && ch <= 'F') return ch - 'A' + 10;
    throw std::invalid_argument("bad hex color: invalid digit");
  };
  auto byte = [&](std::size_t i) {
    return static_cast<std::uint8_t>(nibble(text[i]) * 16 + nibble(text[i + 1]));
  };
  return {byte(0), byte(2), byte(4)};
}

inline std::string to_hex(ColorRGB c) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out = "#";
  for (std::uint8_t v : {c.r, c.g, c.b}) {
    out += kDigits[v >> 4];
    out += kDigits[v & 0xF];
  }
  return out;
}

}  // namespace colorname
