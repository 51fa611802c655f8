#pragma once

#include <cstddef>

#include "bistnet/tensor.hpp"

namespace bistnet::corr {

// Row-stochastic matching weights between source positions (rows) and
// reference positions (columns), both in row-major pixel order.
struct CorrespondenceMatrix {
  Tensor weights;  // [src_h*src_w, ref_h*ref_w]
  std::size_t src_h = 0, src_w = 0;
  std::size_t ref_h = 0, ref_w = 0;
  double temperature = 0.0;
};

struct CorrespondenceOptions {
  double temperature = 0.01;
  // Rows of the similarity matrix computed per block; results do not depend on it.
  std::size_t tile_rows = 256;
};

// [h,w,C] -> [h*w, C]: per-channel mean removed, each row scaled to unit length
// (norm floored at 1e-8, so zero rows stay zero).
Tensor normalize_features(const Tensor& features);

// softmax over cosine similarities divided by the temperature. Forward only.
CorrespondenceMatrix build_correspondence(const Tensor& src_features, const Tensor& ref_features,
                                          const CorrespondenceOptions& options = {});

// ref_ab: [ref_h, ref_w, 2] -> [src_h, src_w, 2], each output a convex
// combination of reference colors.
Tensor warp_colors(const CorrespondenceMatrix& c, const Tensor& ref_ab);

// Bilinear resampling of a warped map to frame resolution.
Tensor upsample_warp(const Tensor& warped, std::size_t height, std::size_t width);

}  // namespace bistnet::corr
