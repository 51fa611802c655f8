#include "bistnet/btfb.hpp"

#include <algorithm>
#include <string>

namespace bistnet::btfb {

FusionWeights temporal_weights(std::size_t t, std::size_t n, bool equation_literal) {
  if (n < 2) throw Error("temporal_weights: clip length must be at least 2, got " + std::to_string(n));
  if (t >= n) throw Error("temporal_weights: frame " + std::to_string(t) + " outside clip of " + std::to_string(n));
  const double span = static_cast<double>(n - 1);
  FusionWeights w{0.0, 0.0, t, n};
  if (2 * t <= n - 1) {
    w.alpha_b = static_cast<double>(t) / span;
    w.alpha_f = 1.0 - w.alpha_b;
  } else {
    w.alpha_f = static_cast<double>(n - 1 - t) / span;
    w.alpha_b = 1.0 - w.alpha_f;
  }
  if (equation_literal) std::swap(w.alpha_f, w.alpha_b);
  return w;
}

Tensor fuse(const Tensor& w_f, const Tensor& w_b, const FusionWeights& weights) {
  if (!w_f.defined() || !w_b.defined() || w_f.shape() != w_b.shape()) {
    throw ShapeError("fuse: shape mismatch " + (w_f.defined() ? shape_str(w_f.shape()) : std::string("<undefined>")) +
                     " vs " + (w_b.defined() ? shape_str(w_b.shape()) : std::string("<undefined>")));
  }
  if (w_f.dtype() != w_b.dtype()) throw DTypeError("fuse: dtype mismatch");
  return visit_dtype(w_f.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto f = w_f.values<T>();
    auto b = w_b.values<T>();
    const T af = static_cast<T>(weights.alpha_f), ab = static_cast<T>(weights.alpha_b);
    std::vector<T> out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      const T v = af * f[i] + ab * b[i];
      out[i] = std::clamp(v, std::min(f[i], b[i]), std::max(f[i], b[i]));
    }
    return Tensor::adopt(w_f.shape(), std::move(out));
  });
}

}  // namespace bistnet::btfb
