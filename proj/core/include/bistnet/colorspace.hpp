#pragma once

#include <array>

#include "bistnet/tensor.hpp"

// sRGB (D65) <-> CIE 1976 L*a*b*.
namespace bistnet::color {

struct Lab {
  double L, a, b;
};

// L: [H,W] in [0,100]; ab: [H,W,2], nominally [-128,127].
struct LabImage {
  Tensor L;
  Tensor ab;
};

inline constexpr double kAbMin = -128.0;
inline constexpr double kAbMax = 127.0;

// Network-facing scaling: L/50 - 1 and ab/110.
inline constexpr double kLScale = 50.0;
inline constexpr double kAbScale = 110.0;

Lab rgb_to_lab(double r, double g, double b);
// Unclamped inverse; callers clamp to the displayable range.
std::array<double, 3> lab_to_rgb(double L, double a, double b);

// rgb: [H,W,3] with every value in [0,1]; throws Error otherwise.
LabImage rgb_to_lab(const Tensor& rgb);
// [H,W,3] clamped to [0,1], in the dtype of lab.L.
Tensor lab_to_rgb(const LabImage& lab);
// The L channel of rgb_to_lab; the canonical grayscale frame.
Tensor luminance_of(const Tensor& rgb);

// Pure elementwise scalings; differentiable through ops.
Tensor normalize_l(const Tensor& L);
Tensor normalize_ab(const Tensor& ab);
Tensor denormalize_ab(const Tensor& ab);

}  // namespace bistnet::color
