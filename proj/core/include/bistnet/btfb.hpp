#pragma once

#include <cstddef>

#include "bistnet/tensor.hpp"

// Bidirectional temporal fusion of the forward and backward warps.
namespace bistnet::btfb {

struct FusionWeights {
  double alpha_f = 1.0;  // weight on the warp from the first-frame reference
  double alpha_b = 0.0;  // weight on the warp from the last-frame reference
  std::size_t t = 0;
  std::size_t n = 2;
};

// alpha_f = (N-1-t)/(N-1): the frame nearer a reference leans on that
// reference's warp. `equation_literal` swaps the two weights (alpha_f =
// t/(N-1)). The smaller weight is computed by division and the larger as its
// complement, which makes the result exactly symmetric under t -> N-1-t.
FusionWeights temporal_weights(std::size_t t, std::size_t n, bool equation_literal = false);

// alpha_f * w_f + alpha_b * w_b, kept inside [min, max] of the two inputs
// per element.
Tensor fuse(const Tensor& w_f, const Tensor& w_b, const FusionWeights& weights);

}  // namespace bistnet::btfb
