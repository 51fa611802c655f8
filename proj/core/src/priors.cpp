#include "bistnet/priors.hpp"

#include <algorithm>
#include <cmath>

#include "bistnet/autograd.hpp"
#include "bistnet/btsr.hpp"
#include "bistnet/ops.hpp"

namespace bistnet::priors {

namespace {

Tensor sobel_kernel(DType dtype) {
  // [ky][kx][cin=1][cout=2]; channel 0 is the horizontal derivative.
  constexpr double gx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  constexpr double gy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  std::vector<double> w(18);
  for (int ky = 0; ky < 3; ++ky)
    for (int kx = 0; kx < 3; ++kx) {
      w[(ky * 3 + kx) * 2 + 0] = gx[ky][kx];
      w[(ky * 3 + kx) * 2 + 1] = gy[ky][kx];
    }
  return Tensor::from_values({3, 3, 1, 2}, w, dtype);
}

std::string where(const std::filesystem::path& p) { return p.filename().string(); }

}  // namespace

Tensor sobel_magnitude(const Tensor& x) {
  if (!x.defined() || x.rank() < 2 || x.rank() > 3 || (x.rank() == 3 && x.dim(2) != 1)) {
    throw ShapeError("sobel: expected [H,W] or [H,W,1], got " +
                     (x.defined() ? shape_str(x.shape()) : std::string("<undefined>")));
  }
  const Tensor img = x.rank() == 2 ? ops::reshape(x, {x.dim(0), x.dim(1), 1}) : x;
  const Tensor grads = ops::conv2d(ops::pad_replicate(img, 1, 1, 1, 1), sobel_kernel(x.dtype()),
                                   Tensor::zeros({2}, x.dtype()));
  const Tensor sq = ops::square(grads);
  return ops::sqrt(ops::add(ops::slice(sq, 2, 0, 1), ops::slice(sq, 2, 1, 2)));
}

Tensor sobel_edge_map(const Tensor& luminance) {
  NoGradGuard no_grad;
  const Tensor mag = sobel_magnitude(luminance);
  return visit_dtype(mag.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto v = mag.values<T>();
    const T mx = *std::max_element(v.begin(), v.end());
    std::vector<T> out(v.size(), T{0});
    if (static_cast<double>(mx) >= 1e-8) {
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::min(T{1}, v[i] / mx);
    }
    return Tensor::adopt(mag.shape(), std::move(out));
  });
}

void PriorMasks::validate() const {
  if (!seg.defined() || !edge.defined() || seg.rank() != 3 || edge.rank() != 3 || edge.dim(2) != 1 ||
      seg.dim(0) != edge.dim(0) || seg.dim(1) != edge.dim(1)) {
    throw ShapeError("prior masks: expected seg [H,W,C] and edge [H,W,1]");
  }
  const std::size_t c = seg.dim(2);
  const auto s = seg.to_vector();
  for (std::size_t p = 0; p < s.size() / c; ++p) {
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double v = s[p * c + k];
      if (!(v >= 0.0 && v <= 1.0)) throw Error("prior masks: segmentation value outside [0,1]");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-4) throw Error("prior masks: segmentation pixel does not sum to 1");
  }
  for (double v : edge.to_vector()) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error("prior masks: edge value outside [0,1]");
  }
}

PriorMasks load_masks(const std::optional<std::filesystem::path>& seg_path,
                      const std::optional<std::filesystem::path>& edge_path, const Tensor& luminance,
                      std::size_t c_seg) {
  if (!luminance.defined() || luminance.rank() != 2) throw ShapeError("load_masks: luminance must be [H,W]");
  if (c_seg == 0) throw Error("load_masks: c_seg must be positive");
  const std::size_t h = luminance.dim(0), w = luminance.dim(1);
  PriorMasks masks;

  if (seg_path) {
    const Tensor raw = btsr::read(*seg_path);
    if (raw.shape() != Shape{h, w, c_seg}) {
      throw ShapeError("load_masks: " + where(*seg_path) + " has shape " + shape_str(raw.shape()) + ", expected " +
                       shape_str({h, w, c_seg}));
    }
    auto v = raw.to_vector();
    for (std::size_t p = 0; p < h * w; ++p) {
      double total = 0.0;
      for (std::size_t k = 0; k < c_seg; ++k) {
        const double x = v[p * c_seg + k];
        if (!(x >= 0.0 && x <= 1.0 + kSegSumTolerance)) {
          throw Error("load_masks: " + where(*seg_path) + " holds probability " + std::to_string(x) + " at pixel " +
                      std::to_string(p));
        }
        total += x;
      }
      if (std::abs(total - 1.0) >= kSegSumTolerance) {
        throw Error("load_masks: " + where(*seg_path) + " pixel " + std::to_string(p) + " sums to " +
                    std::to_string(total));
      }
      for (std::size_t k = 0; k < c_seg; ++k) v[p * c_seg + k] = std::min(1.0, v[p * c_seg + k] / total);
    }
    masks.seg = Tensor::from_values({h, w, c_seg}, v, luminance.dtype());
    masks.seg_source = SegSource::imported;
  } else {
    masks.seg = Tensor::full({h, w, c_seg}, 1.0 / static_cast<double>(c_seg), luminance.dtype());
    masks.seg_source = SegSource::uniform_fallback;
  }

  if (edge_path) {
    Tensor raw = btsr::read(*edge_path);
    if (raw.rank() == 2 && raw.dim(0) == h && raw.dim(1) == w) raw = ops::reshape(raw, {h, w, 1});
    if (raw.shape() != Shape{h, w, 1}) {
      throw ShapeError("load_masks: " + where(*edge_path) + " has shape " + shape_str(raw.shape()) + ", expected " +
                       shape_str({h, w, 1}));
    }
    for (double x : raw.to_vector()) {
      if (!(x >= 0.0 && x <= 1.0)) throw Error("load_masks: " + where(*edge_path) + " holds value outside [0,1]");
    }
    masks.edge = raw.to(luminance.dtype());
    masks.edge_source = EdgeSource::imported;
  } else {
    masks.edge = sobel_edge_map(luminance);
    masks.edge_source = EdgeSource::builtin_sobel;
  }
  return masks;
}

std::filesystem::path seg_file(const std::filesystem::path& dir, const std::string& frame_id) {
  return dir / (frame_id + "_seg.btsr");
}

std::filesystem::path edge_file(const std::filesystem::path& dir, const std::string& frame_id) {
  return dir / (frame_id + "_edge.btsr");
}

}  // namespace bistnet::priors
