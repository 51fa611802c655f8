#include "bistnet/correspondence.hpp"

#include <algorithm>
#include <cmath>

#include "bistnet/autograd.hpp"
#include "bistnet/ops.hpp"

namespace bistnet::corr {

namespace {

constexpr double kNormFloor = 1e-8;

void require_features(const char* op, const Tensor& f) {
  if (!f.defined() || f.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected [h,w,C] features, got " +
                     (f.defined() ? shape_str(f.shape()) : std::string("<undefined>")));
  }
}

}  // namespace

Tensor normalize_features(const Tensor& features) {
  require_features("normalize_features", features);
  const std::size_t n = features.dim(0) * features.dim(1), c = features.dim(2);
  return visit_dtype(features.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto v = features.values<T>();
    std::vector<double> mean(c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < c; ++k) mean[k] += static_cast<double>(v[i * c + k]);
    for (double& m : mean) m /= static_cast<double>(n);
    std::vector<T> out(n * c);
    std::vector<double> row(c);
    for (std::size_t i = 0; i < n; ++i) {
      double norm = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        row[k] = static_cast<double>(v[i * c + k]) - mean[k];
        norm += row[k] * row[k];
      }
      norm = std::max(std::sqrt(norm), kNormFloor);
      for (std::size_t k = 0; k < c; ++k) out[i * c + k] = static_cast<T>(row[k] / norm);
    }
    return Tensor::adopt({n, c}, std::move(out));
  });
}

CorrespondenceMatrix build_correspondence(const Tensor& src_features, const Tensor& ref_features,
                                          const CorrespondenceOptions& options) {
  require_features("build_correspondence", src_features);
  require_features("build_correspondence", ref_features);
  if (src_features.dim(2) != ref_features.dim(2)) {
    throw ShapeError("build_correspondence: channel mismatch " + shape_str(src_features.shape()) + " vs " +
                     shape_str(ref_features.shape()));
  }
  if (src_features.dtype() != ref_features.dtype()) throw DTypeError("build_correspondence: dtype mismatch");
  if (!(options.temperature > 0.0)) throw Error("build_correspondence: temperature must be positive");
  if (options.tile_rows == 0) throw Error("build_correspondence: tile_rows must be positive");

  NoGradGuard no_grad;
  const Tensor src = normalize_features(src_features);
  const Tensor ref_t = ops::transpose(normalize_features(ref_features));
  const std::size_t rows = src.dim(0), cols = ref_t.dim(1);

  Tensor weights = visit_dtype(src.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> out(rows * cols);
    for (std::size_t begin = 0; begin < rows; begin += options.tile_rows) {
      const std::size_t end = std::min(rows, begin + options.tile_rows);
      const Tensor tile = ops::slice(src, 0, begin, end);
      const Tensor probs = ops::softmax_rows(ops::scalar_mul(ops::matmul(tile, ref_t), 1.0 / options.temperature));
      auto pv = probs.values<T>();
      std::copy(pv.begin(), pv.end(), out.begin() + static_cast<std::ptrdiff_t>(begin * cols));
    }
    return Tensor::adopt({rows, cols}, std::move(out));
  });

  return {weights,           src_features.dim(0), src_features.dim(1), ref_features.dim(0),
          ref_features.dim(1), options.temperature};
}

Tensor warp_colors(const CorrespondenceMatrix& c, const Tensor& ref_ab) {
  if (!ref_ab.defined() || ref_ab.rank() != 3 || ref_ab.dim(0) != c.ref_h || ref_ab.dim(1) != c.ref_w) {
    throw ShapeError("warp_colors: reference map " +
                     (ref_ab.defined() ? shape_str(ref_ab.shape()) : std::string("<undefined>")) +
                     " does not match correspondence reference grid " + shape_str({c.ref_h, c.ref_w}));
  }
  const std::size_t channels = ref_ab.dim(2);
  const Tensor flat = ops::reshape(ref_ab, {c.ref_h * c.ref_w, channels});
  return ops::reshape(ops::matmul(c.weights, flat.to(c.weights.dtype())), {c.src_h, c.src_w, channels});
}

Tensor upsample_warp(const Tensor& warped, std::size_t height, std::size_t width) {
  return ops::resize_bilinear(warped, height, width);
}

}  // namespace bistnet::corr
