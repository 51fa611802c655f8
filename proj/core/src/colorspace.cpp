#include "bistnet/colorspace.hpp"

#include <algorithm>
#include <cmath>

#include "bistnet/ops.hpp"

namespace bistnet::color {

namespace {

// sRGB primaries to XYZ; the reference white is taken as the image of RGB
// white so that (1,1,1) maps to a = b = 0 exactly.
constexpr double kRgbToXyz[3][3] = {
    {0.412453, 0.357580, 0.180423},
    {0.212671, 0.715160, 0.072169},
    {0.019334, 0.119193, 0.950227},
};

constexpr double kDelta = 6.0 / 29.0;

struct Tables {
  double white[3];
  double xyz_to_rgb[3][3];
};

const Tables& tables() {
  static const Tables t = [] {
    Tables out{};
    for (int i = 0; i < 3; ++i) out.white[i] = kRgbToXyz[i][0] + kRgbToXyz[i][1] + kRgbToXyz[i][2];
    const auto& m = kRgbToXyz;
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        const int r1 = (c + 1) % 3, r2 = (c + 2) % 3;
        const int c1 = (r + 1) % 3, c2 = (r + 2) % 3;
        out.xyz_to_rgb[r][c] = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
      }
    }
    return out;
  }();
  return t;
}

double srgb_decode(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

double srgb_encode(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double f) { return f > kDelta ? f * f * f : 3.0 * kDelta * kDelta * (f - 4.0 / 29.0); }

void require_rgb(const Tensor& rgb) {
  if (!rgb.defined() || rgb.rank() != 3 || rgb.dim(2) != 3) {
    throw ShapeError("rgb_to_lab: expected [H,W,3], got " +
                     (rgb.defined() ? shape_str(rgb.shape()) : std::string("<undefined>")));
  }
}

}  // namespace

Lab rgb_to_lab(double r, double g, double b) {
  const Tables& t = tables();
  const double lin[3] = {srgb_decode(r), srgb_decode(g), srgb_decode(b)};
  double xyz[3];
  for (int i = 0; i < 3; ++i) {
    xyz[i] = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
  }
  const double fx = lab_f(xyz[0] / t.white[0]);
  const double fy = lab_f(xyz[1] / t.white[1]);
  const double fz = lab_f(xyz[2] / t.white[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<double, 3> lab_to_rgb(double L, double a, double b) {
  const Tables& t = tables();
  const double fy = (L + 16.0) / 116.0;
  const double xyz[3] = {t.white[0] * lab_f_inv(fy + a / 500.0), t.white[1] * lab_f_inv(fy),
                         t.white[2] * lab_f_inv(fy - b / 200.0)};
  std::array<double, 3> rgb{};
  for (int i = 0; i < 3; ++i) {
    const double lin =
        t.xyz_to_rgb[i][0] * xyz[0] + t.xyz_to_rgb[i][1] * xyz[1] + t.xyz_to_rgb[i][2] * xyz[2];
    rgb[i] = srgb_encode(std::max(lin, 0.0));
  }
  return rgb;
}

LabImage rgb_to_lab(const Tensor& rgb) {
  require_rgb(rgb);
  const std::size_t h = rgb.dim(0), w = rgb.dim(1);
  const auto v = rgb.to_vector();
  for (double c : v) {
    if (!(c >= 0.0 && c <= 1.0)) throw Error("rgb_to_lab: value " + std::to_string(c) + " outside [0,1]");
  }
  std::vector<double> L(h * w), ab(h * w * 2);
  for (std::size_t p = 0; p < h * w; ++p) {
    const Lab lab = rgb_to_lab(v[3 * p], v[3 * p + 1], v[3 * p + 2]);
    L[p] = lab.L;
    ab[2 * p] = lab.a;
    ab[2 * p + 1] = lab.b;
  }
  return {Tensor::from_values({h, w}, L, rgb.dtype()), Tensor::from_values({h, w, 2}, ab, rgb.dtype())};
}

Tensor lab_to_rgb(const LabImage& lab) {
  if (!lab.L.defined() || !lab.ab.defined() || lab.L.rank() != 2 || lab.ab.rank() != 3 ||
      lab.ab.dim(0) != lab.L.dim(0) || lab.ab.dim(1) != lab.L.dim(1) || lab.ab.dim(2) != 2) {
    throw ShapeError("lab_to_rgb: expected L [H,W] and ab [H,W,2]");
  }
  const std::size_t h = lab.L.dim(0), w = lab.L.dim(1);
  const auto L = lab.L.to_vector();
  const auto ab = lab.ab.to_vector();
  std::vector<double> out(h * w * 3);
  for (std::size_t p = 0; p < h * w; ++p) {
    const auto rgb = lab_to_rgb(L[p], ab[2 * p], ab[2 * p + 1]);
    for (int c = 0; c < 3; ++c) out[3 * p + c] = std::clamp(rgb[c], 0.0, 1.0);
  }
  return Tensor::from_values({h, w, 3}, out, lab.L.dtype());
}

Tensor luminance_of(const Tensor& rgb) { return rgb_to_lab(rgb).L; }

Tensor normalize_l(const Tensor& L) { return ops::scalar_add(ops::scalar_mul(L, 1.0 / kLScale), -1.0); }

Tensor normalize_ab(const Tensor& ab) { return ops::scalar_mul(ab, 1.0 / kAbScale); }

Tensor denormalize_ab(const Tensor& ab) { return ops::scalar_mul(ab, kAbScale); }

}  // namespace bistnet::color
