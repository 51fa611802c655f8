#pragma once

#include <cstddef>
#include <vector>

#include "bistnet/autograd.hpp"
#include "bistnet/tensor.hpp"

// Primitive differentiable operations. Every op checks its shape rule, throws
// ShapeError / DTypeError naming itself and the offending shapes, and records
// onto the current Tape when an input requires grad. There is no broadcasting
// apart from the scalar_* ops.
namespace bistnet::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& x, double s);
Tensor scalar_add(const Tensor& x, double s);

Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
// Gradient is taken as zero where the output is exactly zero.
Tensor sqrt(const Tensor& x);
// Gradient passes only strictly inside (lo, hi) or at the unclamped boundary.
Tensor clamp(const Tensor& x, double lo, double hi);

// Full reductions to a rank-0 scalar; accumulation is carried out in double.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m,n] -> [n,m]
Tensor transpose(const Tensor& x);
// Row-wise softmax of a rank-2 tensor with per-row max subtraction.
Tensor softmax_rows(const Tensor& x);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;  // zero padding on every side
};

// x: [H,W,Cin], weight: [K,K,Cin,Cout], bias: [Cout] -> [OH,OW,Cout] with
// OH = (H + 2*pad - K) / stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options = {});

// Bilinear resampling of [H,W] or [H,W,C] to [out_h,out_w(,C)] using half-pixel
// centers with coordinates clamped to the border. Constants map to themselves
// exactly and equal sizes are an exact identity.
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);
// Resize by a scale factor; output extents are round(extent * scale), at least 1.
Tensor resample_bilinear(const Tensor& x, double scale);

// Samples x:[H,W,C] at (col + flow[...,0], row + flow[...,1]) bilinearly. Samples
// outside the frame read zero. Gradients flow to x only; flow is data.
Tensor flow_warp(const Tensor& x, const Tensor& flow);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Half-open range [begin, end) along axis.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
// Edge replication of [H,W] or [H,W,C].
Tensor pad_replicate(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
                     std::size_t right);

}  // namespace bistnet::ops
