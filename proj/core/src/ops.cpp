#include "bistnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace bistnet::ops {

namespace {

[[noreturn]] void shape_fail(std::string_view op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

void require_defined(std::string_view op, const Tensor& t) {
  if (!t.defined()) shape_fail(op, "undefined operand");
}

void require_same(std::string_view op, const Tensor& a, const Tensor& b) {
  require_defined(op, a);
  require_defined(op, b);
  if (a.dtype() != b.dtype()) {
    throw DTypeError(std::string(op) + ": dtype mismatch " + std::string(dtype_name(a.dtype())) +
                     " vs " + std::string(dtype_name(b.dtype())));
  }
  if (a.shape() != b.shape()) {
    shape_fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
  require_defined(op, t);
  if (t.rank() != rank) {
    shape_fail(op, "expected rank " + std::to_string(rank) + ", got shape " + shape_str(t.shape()));
  }
}

// Image view over [H,W] or [H,W,C].
struct ImageDims {
  std::size_t h, w, c;
};

ImageDims image_dims(std::string_view op, const Tensor& t) {
  require_defined(op, t);
  if (t.rank() == 2) return {t.dim(0), t.dim(1), 1};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  shape_fail(op, "expected [H,W] or [H,W,C], got " + shape_str(t.shape()));
}

Shape image_shape(const Tensor& like, std::size_t h, std::size_t w) {
  if (like.rank() == 2) return {h, w};
  return {h, w, like.dim(2)};
}

template <class F>
Tensor unary_map(const Tensor& x, F f) {
  return visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto v = x.values<T>();
    std::vector<T> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = f(v[i]);
    return Tensor::adopt(x.shape(), std::move(out));
  });
}

template <class F>
Tensor binary_map(const Tensor& a, const Tensor& b, F f) {
  return visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.values<T>();
    auto y = b.values<T>();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
    return Tensor::adopt(a.shape(), std::move(out));
  });
}

Tensor raw_mul(const Tensor& a, const Tensor& b) {
  return binary_map(a, b, [](auto x, auto y) { return x * y; });
}

Tensor raw_scale(const Tensor& a, double s) {
  return unary_map(a, [s](auto x) { return x * static_cast<decltype(x)>(s); });
}

struct Tap {
  std::size_t i0, i1;
  double f;
};

std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double s = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    taps[o] = {i0, std::min(i0 + 1, in - 1), s - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  Tensor out = binary_map(a, b, [](auto x, auto y) { return x + y; });
  return record(OpKind::add, {a, b}, out,
                [](const Tensor& g, std::span<const bool> needs, std::span<Tensor> gin) {
                  if (needs[0]) gin[0] = g;
                  if (needs[1]) gin[1] = g;
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  Tensor out = binary_map(a, b, [](auto x, auto y) { return x - y; });
  return record(OpKind::sub, {a, b}, out,
                [](const Tensor& g, std::span<const bool> needs, std::span<Tensor> gin) {
                  if (needs[0]) gin[0] = g;
                  if (needs[1]) gin[1] = raw_scale(g, -1.0);
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  Tensor out = raw_mul(a, b);
  return record(OpKind::mul, {a, b}, out,
                [a, b](const Tensor& g, std::span<const bool> needs, std::span<Tensor> gin) {
                  if (needs[0]) gin[0] = raw_mul(g, b);
                  if (needs[1]) gin[1] = raw_mul(g, a);
                });
}

Tensor scalar_mul(const Tensor& x, double s) {
  require_defined("scalar_mul", x);
  Tensor out = raw_scale(x, s);
  return record(OpKind::scalar_mul, {x}, out,
                [s](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = raw_scale(g, s);
                });
}

Tensor scalar_add(const Tensor& x, double s) {
  require_defined("scalar_add", x);
  Tensor out = unary_map(x, [s](auto v) { return v + static_cast<decltype(v)>(s); });
  return record(OpKind::scalar_add, {x}, out,
                [](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) { gin[0] = g; });
}

Tensor relu(const Tensor& x) {
  require_defined("relu", x);
  Tensor out = unary_map(x, [](auto v) { return v > 0 ? v : decltype(v){0}; });
  return record(OpKind::relu, {x}, out,
                [x](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = binary_map(g, x, [](auto gv, auto xv) {
                    return xv > 0 ? gv : decltype(gv){0};
                  });
                });
}

Tensor abs(const Tensor& x) {
  require_defined("abs", x);
  Tensor out = unary_map(x, [](auto v) { return std::abs(v); });
  return record(OpKind::abs, {x}, out,
                [x](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = binary_map(g, x, [](auto gv, auto xv) {
                    using T = decltype(gv);
                    return xv > 0 ? gv : (xv < 0 ? -gv : T{0});
                  });
                });
}

Tensor square(const Tensor& x) {
  require_defined("square", x);
  Tensor out = unary_map(x, [](auto v) { return v * v; });
  return record(OpKind::square, {x}, out,
                [x](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = binary_map(g, x, [](auto gv, auto xv) { return gv * (xv + xv); });
                });
}

Tensor sqrt(const Tensor& x) {
  require_defined("sqrt", x);
  Tensor out = unary_map(x, [](auto v) { return std::sqrt(v); });
  return record(OpKind::sqrt, {x}, out,
                [out](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = binary_map(g, out, [](auto gv, auto yv) {
                    using T = decltype(gv);
                    return yv > 0 ? gv / (yv + yv) : T{0};
                  });
                });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  require_defined("clamp", x);
  if (!(lo <= hi)) shape_fail("clamp", "lower bound exceeds upper bound");
  Tensor out = unary_map(x, [lo, hi](auto v) {
    using T = decltype(v);
    return std::clamp(v, static_cast<T>(lo), static_cast<T>(hi));
  });
  return record(OpKind::clamp, {x}, out,
                [x, lo, hi](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = binary_map(g, x, [lo, hi](auto gv, auto xv) {
                    using T = decltype(gv);
                    return (xv >= static_cast<T>(lo) && xv <= static_cast<T>(hi)) ? gv : T{0};
                  });
                });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  require_defined("sum", x);
  const double total = visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    double acc = 0.0;
    for (T v : x.values<T>()) acc += static_cast<double>(v);
    return acc;
  });
  Tensor out = Tensor::scalar(total, x.dtype());
  return record(OpKind::sum, {x}, out,
                [x](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = Tensor::full(x.shape(), g.item(), x.dtype());
                });
}

Tensor mean(const Tensor& x) {
  require_defined("mean", x);
  const double n = static_cast<double>(x.numel());
  const double total = visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    double acc = 0.0;
    for (T v : x.values<T>()) acc += static_cast<double>(v);
    return acc;
  });
  Tensor out = Tensor::scalar(total / n, x.dtype());
  return record(OpKind::mean, {x}, out,
                [x, n](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = Tensor::full(x.shape(), g.item() / n, x.dtype());
                });
}

// ---------------------------------------------------------------------------
// Linear algebra

namespace {

Tensor raw_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  return visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.values<T>();
    auto y = b.values<T>();
    std::vector<T> out(m * n, T{0});
    for (std::size_t i = 0; i < m; ++i) {
      T* row = out.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T v = x[i * k + p];
        const T* brow = y.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += v * brow[j];
      }
    }
    return Tensor::adopt({m, n}, std::move(out));
  });
}

Tensor raw_transpose(const Tensor& x) {
  const std::size_t m = x.dim(0), n = x.dim(1);
  return visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto v = x.values<T>();
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
    return Tensor::adopt({n, m}, std::move(out));
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dtype() != b.dtype()) throw DTypeError("matmul: dtype mismatch");
  if (a.dim(1) != b.dim(0)) {
    shape_fail("matmul", "inner extents differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out = raw_matmul(a, b);
  return record(OpKind::matmul, {a, b}, out,
                [a, b](const Tensor& g, std::span<const bool> needs, std::span<Tensor> gin) {
                  if (needs[0]) gin[0] = raw_matmul(g, raw_transpose(b));
                  if (needs[1]) gin[1] = raw_matmul(raw_transpose(a), g);
                });
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  Tensor out = raw_transpose(x);
  return record(OpKind::transpose, {x}, out,
                [](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = raw_transpose(g);
                });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank("softmax_rows", x, 2);
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor out = visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto v = x.values<T>();
    std::vector<T> y(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      const T* row = v.data() + i * n;
      T* dst = y.data() + i * n;
      const T mx = *std::max_element(row, row + n);
      T total{0};
      for (std::size_t j = 0; j < n; ++j) {
        dst[j] = std::exp(row[j] - mx);
        total += dst[j];
      }
      for (std::size_t j = 0; j < n; ++j) dst[j] /= total;
    }
    return Tensor::adopt({m, n}, std::move(y));
  });
  return record(OpKind::softmax_rows, {x}, out,
                [out, m, n](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = visit_dtype(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    auto gv = g.values<T>();
                    auto yv = out.values<T>();
                    std::vector<T> dx(m * n);
                    for (std::size_t i = 0; i < m; ++i) {
                      T dot{0};
                      for (std::size_t j = 0; j < n; ++j) dot += gv[i * n + j] * yv[i * n + j];
                      for (std::size_t j = 0; j < n; ++j)
                        dx[i * n + j] = yv[i * n + j] * (gv[i * n + j] - dot);
                    }
                    return Tensor::adopt({m, n}, std::move(dx));
                  });
                });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeom {
  std::size_t h, w, cin, k, cout, stride, pad, oh, ow;

  // Input row/col for an output position and kernel tap; false when it lands in padding.
  bool in_y(std::size_t oy, std::size_t ky, std::size_t& iy) const {
    const long v = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
    if (v < 0 || v >= static_cast<long>(h)) return false;
    iy = static_cast<std::size_t>(v);
    return true;
  }
  bool in_x(std::size_t ox, std::size_t kx, std::size_t& ix) const {
    const long v = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
    if (v < 0 || v >= static_cast<long>(w)) return false;
    ix = static_cast<std::size_t>(v);
    return true;
  }
};

template <class T>
void conv_forward(const ConvGeom& g, const T* x, const T* wt, const T* b, T* out) {
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      T* o = out + (oy * g.ow + ox) * g.cout;
      std::copy(b, b + g.cout, o);
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        std::size_t iy;
        if (!g.in_y(oy, ky, iy)) continue;
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          std::size_t ix;
          if (!g.in_x(ox, kx, ix)) continue;
          const T* in = x + (iy * g.w + ix) * g.cin;
          const T* wk = wt + (ky * g.k + kx) * g.cin * g.cout;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const T v = in[ci];
            const T* wr = wk + ci * g.cout;
            for (std::size_t co = 0; co < g.cout; ++co) o[co] += v * wr[co];
          }
        }
      }
    }
  }
}

template <class T>
void conv_backward(const ConvGeom& g, const T* x, const T* wt, const T* gout, T* gx, T* gw, T* gb) {
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      const T* go = gout + (oy * g.ow + ox) * g.cout;
      if (gb) {
        for (std::size_t co = 0; co < g.cout; ++co) gb[co] += go[co];
      }
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        std::size_t iy;
        if (!g.in_y(oy, ky, iy)) continue;
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          std::size_t ix;
          if (!g.in_x(ox, kx, ix)) continue;
          const std::size_t in_off = (iy * g.w + ix) * g.cin;
          const std::size_t w_off = (ky * g.k + kx) * g.cin * g.cout;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const T* wr = wt + w_off + ci * g.cout;
            if (gx) {
              T acc{0};
              for (std::size_t co = 0; co < g.cout; ++co) acc += wr[co] * go[co];
              gx[in_off + ci] += acc;
            }
            if (gw) {
              const T v = x[in_off + ci];
              T* gwr = gw + w_off + ci * g.cout;
              for (std::size_t co = 0; co < g.cout; ++co) gwr[co] += v * go[co];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options) {
  require_rank("conv2d", x, 3);
  require_rank("conv2d", weight, 4);
  require_rank("conv2d", bias, 1);
  if (x.dtype() != weight.dtype() || x.dtype() != bias.dtype()) {
    throw DTypeError("conv2d: dtype mismatch between input, weight and bias");
  }
  if (weight.dim(0) != weight.dim(1)) shape_fail("conv2d", "kernel must be square, got " + shape_str(weight.shape()));
  if (weight.dim(2) != x.dim(2)) {
    shape_fail("conv2d", "input " + shape_str(x.shape()) + " does not match weight " + shape_str(weight.shape()));
  }
  if (bias.dim(0) != weight.dim(3)) {
    shape_fail("conv2d", "bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(weight.shape()));
  }
  if (options.stride == 0) shape_fail("conv2d", "stride must be positive");
  const std::size_t k = weight.dim(0);
  if (x.dim(0) + 2 * options.pad < k || x.dim(1) + 2 * options.pad < k) {
    shape_fail("conv2d", "input " + shape_str(x.shape()) + " smaller than kernel " + shape_str(weight.shape()));
  }
  ConvGeom geom{x.dim(0), x.dim(1), x.dim(2), k, weight.dim(3), options.stride, options.pad, 0, 0};
  geom.oh = (geom.h + 2 * geom.pad - k) / geom.stride + 1;
  geom.ow = (geom.w + 2 * geom.pad - k) / geom.stride + 1;

  Tensor out = visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> o(geom.oh * geom.ow * geom.cout);
    conv_forward<T>(geom, x.values<T>().data(), weight.values<T>().data(), bias.values<T>().data(), o.data());
    return Tensor::adopt({geom.oh, geom.ow, geom.cout}, std::move(o));
  });
  return record(OpKind::conv2d, {x, weight, bias}, out,
                [x, weight, geom](const Tensor& g, std::span<const bool> needs, std::span<Tensor> gin) {
                  visit_dtype(x.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    std::vector<T> gx(needs[0] ? x.numel() : 0, T{0});
                    std::vector<T> gw(needs[1] ? weight.numel() : 0, T{0});
                    std::vector<T> gb(needs[2] ? geom.cout : 0, T{0});
                    conv_backward<T>(geom, x.values<T>().data(), weight.values<T>().data(),
                                     g.values<T>().data(), needs[0] ? gx.data() : nullptr,
                                     needs[1] ? gw.data() : nullptr, needs[2] ? gb.data() : nullptr);
                    if (needs[0]) gin[0] = Tensor::adopt(x.shape(), std::move(gx));
                    if (needs[1]) gin[1] = Tensor::adopt(weight.shape(), std::move(gw));
                    if (needs[2]) gin[2] = Tensor::adopt({geom.cout}, std::move(gb));
                    return 0;
                  });
                });
}

// ---------------------------------------------------------------------------
// Resampling

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  const ImageDims d = image_dims("bilinear_resample", x);
  if (out_h == 0 || out_w == 0) shape_fail("bilinear_resample", "zero output extent");
  const auto ty = resize_taps(d.h, out_h);
  const auto tx = resize_taps(d.w, out_w);
  const Shape out_shape = image_shape(x, out_h, out_w);

  Tensor out = visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto v = x.values<T>();
    std::vector<T> o(out_h * out_w * d.c);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const T fy = static_cast<T>(ty[oy].f);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const T fx = static_cast<T>(tx[ox].f);
        const T* a = v.data() + (ty[oy].i0 * d.w + tx[ox].i0) * d.c;
        const T* b = v.data() + (ty[oy].i0 * d.w + tx[ox].i1) * d.c;
        const T* c = v.data() + (ty[oy].i1 * d.w + tx[ox].i0) * d.c;
        const T* e = v.data() + (ty[oy].i1 * d.w + tx[ox].i1) * d.c;
        T* dst = o.data() + (oy * out_w + ox) * d.c;
        for (std::size_t ch = 0; ch < d.c; ++ch) {
          const T top = a[ch] + fx * (b[ch] - a[ch]);
          const T bottom = c[ch] + fx * (e[ch] - c[ch]);
          dst[ch] = top + fy * (bottom - top);
        }
      }
    }
    return Tensor::adopt(out_shape, std::move(o));
  });
  return record(OpKind::bilinear_resample, {x}, out,
                [x, d, ty, tx, out_h, out_w](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = visit_dtype(x.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    auto gv = g.values<T>();
                    std::vector<T> gx(x.numel(), T{0});
                    for (std::size_t oy = 0; oy < out_h; ++oy) {
                      const T fy = static_cast<T>(ty[oy].f);
                      for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const T fx = static_cast<T>(tx[ox].f);
                        const T wa = (1 - fy) * (1 - fx), wb = (1 - fy) * fx;
                        const T wc = fy * (1 - fx), we = fy * fx;
                        T* a = gx.data() + (ty[oy].i0 * d.w + tx[ox].i0) * d.c;
                        T* b = gx.data() + (ty[oy].i0 * d.w + tx[ox].i1) * d.c;
                        T* c = gx.data() + (ty[oy].i1 * d.w + tx[ox].i0) * d.c;
                        T* e = gx.data() + (ty[oy].i1 * d.w + tx[ox].i1) * d.c;
                        const T* src = gv.data() + (oy * out_w + ox) * d.c;
                        for (std::size_t ch = 0; ch < d.c; ++ch) {
                          a[ch] += wa * src[ch];
                          b[ch] += wb * src[ch];
                          c[ch] += wc * src[ch];
                          e[ch] += we * src[ch];
                        }
                      }
                    }
                    return Tensor::adopt(x.shape(), std::move(gx));
                  });
                });
}

Tensor resample_bilinear(const Tensor& x, double scale) {
  const ImageDims d = image_dims("bilinear_resample", x);
  if (!(scale > 0.0)) shape_fail("bilinear_resample", "scale must be positive");
  auto scaled = [scale](std::size_t n) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * scale)));
  };
  return resize_bilinear(x, scaled(d.h), scaled(d.w));
}

Tensor flow_warp(const Tensor& x, const Tensor& flow) {
  require_rank("flow_warp", x, 3);
  require_rank("flow_warp", flow, 3);
  if (flow.dim(0) != x.dim(0) || flow.dim(1) != x.dim(1) || flow.dim(2) != 2) {
    shape_fail("flow_warp", "flow " + shape_str(flow.shape()) + " does not match image " + shape_str(x.shape()));
  }
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const Tensor flow64 = flow.to(DType::f64);

  struct Sample {
    bool valid;
    std::size_t x0, x1, y0, y1;
    double fx, fy;
  };
  std::vector<Sample> samples(h * w);
  {
    auto fv = flow64.values<double>();
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t col = 0; col < w; ++col) {
        const double sx = static_cast<double>(col) + fv[(y * w + col) * 2];
        const double sy = static_cast<double>(y) + fv[(y * w + col) * 2 + 1];
        Sample s{false, 0, 0, 0, 0, 0.0, 0.0};
        if (sx >= 0.0 && sy >= 0.0 && sx <= static_cast<double>(w - 1) && sy <= static_cast<double>(h - 1)) {
          s.valid = true;
          s.x0 = static_cast<std::size_t>(std::floor(sx));
          s.y0 = static_cast<std::size_t>(std::floor(sy));
          s.x1 = std::min(s.x0 + 1, w - 1);
          s.y1 = std::min(s.y0 + 1, h - 1);
          s.fx = sx - static_cast<double>(s.x0);
          s.fy = sy - static_cast<double>(s.y0);
        }
        samples[y * w + col] = s;
      }
    }
  }

  Tensor out = visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto v = x.values<T>();
    std::vector<T> o(h * w * c, T{0});
    for (std::size_t p = 0; p < h * w; ++p) {
      const Sample& s = samples[p];
      if (!s.valid) continue;
      const T fx = static_cast<T>(s.fx), fy = static_cast<T>(s.fy);
      const T* a = v.data() + (s.y0 * w + s.x0) * c;
      const T* b = v.data() + (s.y0 * w + s.x1) * c;
      const T* cc = v.data() + (s.y1 * w + s.x0) * c;
      const T* e = v.data() + (s.y1 * w + s.x1) * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T top = a[ch] + fx * (b[ch] - a[ch]);
        const T bottom = cc[ch] + fx * (e[ch] - cc[ch]);
        o[p * c + ch] = top + fy * (bottom - top);
      }
    }
    return Tensor::adopt(x.shape(), std::move(o));
  });
  // The flow is consumed as data; only the image input joins the graph.
  return record(OpKind::flow_warp, {x}, out,
                [x, samples, w, c](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = visit_dtype(x.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    auto gv = g.values<T>();
                    std::vector<T> gx(x.numel(), T{0});
                    for (std::size_t p = 0; p < samples.size(); ++p) {
                      const Sample& s = samples[p];
                      if (!s.valid) continue;
                      const T fx = static_cast<T>(s.fx), fy = static_cast<T>(s.fy);
                      const T wa = (1 - fy) * (1 - fx), wb = (1 - fy) * fx;
                      const T wc = fy * (1 - fx), we = fy * fx;
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const T gp = gv[p * c + ch];
                        gx[(s.y0 * w + s.x0) * c + ch] += wa * gp;
                        gx[(s.y0 * w + s.x1) * c + ch] += wb * gp;
                        gx[(s.y1 * w + s.x0) * c + ch] += wc * gp;
                        gx[(s.y1 * w + s.x1) * c + ch] += we * gp;
                      }
                    }
                    return Tensor::adopt(x.shape(), std::move(gx));
                  });
                });
}

// ---------------------------------------------------------------------------
// Structural

namespace {

struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit a{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

Tensor raw_slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit sp = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  return visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto v = x.values<T>();
    const std::size_t len = (end - begin) * sp.inner;
    std::vector<T> o(sp.outer * len);
    for (std::size_t i = 0; i < sp.outer; ++i) {
      const T* src = v.data() + (i * sp.extent + begin) * sp.inner;
      std::copy(src, src + len, o.data() + i * len);
    }
    return Tensor::adopt(out_shape, std::move(o));
  });
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) shape_fail("concat", "no operands");
  const Tensor& first = parts.front();
  require_defined("concat", first);
  if (axis >= first.rank()) shape_fail("concat", "axis out of range for " + shape_str(first.shape()));
  Shape out_shape = first.shape();
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    require_defined("concat", p);
    if (p.dtype() != first.dtype()) throw DTypeError("concat: dtype mismatch");
    bool ok = p.rank() == first.rank();
    for (std::size_t i = 0; ok && i < p.rank(); ++i) ok = (i == axis) || p.dim(i) == first.dim(i);
    if (!ok) shape_fail("concat", "shape mismatch " + shape_str(first.shape()) + " vs " + shape_str(p.shape()));
    out_shape[axis] += p.dim(axis);
  }
  const AxisSplit sp = split_at(out_shape, axis);
  Tensor out = visit_dtype(first.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> o(numel(out_shape));
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
      auto v = p.values<T>();
      const std::size_t len = p.dim(axis) * sp.inner;
      for (std::size_t i = 0; i < sp.outer; ++i) {
        std::copy(v.data() + i * len, v.data() + (i + 1) * len, o.data() + i * sp.extent * sp.inner + offset);
      }
      offset += len;
    }
    return Tensor::adopt(out_shape, std::move(o));
  });
  std::vector<std::size_t> extents;
  for (const Tensor& p : parts) extents.push_back(p.dim(axis));
  return record(OpKind::concat, parts, out,
                [axis, extents](const Tensor& g, std::span<const bool> needs, std::span<Tensor> gin) {
                  std::size_t begin = 0;
                  for (std::size_t i = 0; i < extents.size(); ++i) {
                    if (needs[i]) gin[i] = raw_slice(g, axis, begin, begin + extents[i]);
                    begin += extents[i];
                  }
                });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_defined("slice", x);
  if (axis >= x.rank() || begin >= end || end > x.dim(axis)) {
    shape_fail("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                            std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  }
  Tensor out = raw_slice(x, axis, begin, end);
  return record(OpKind::slice, {x}, out,
                [x, axis, begin, end](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  const AxisSplit sp = split_at(x.shape(), axis);
                  gin[0] = visit_dtype(x.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    auto gv = g.values<T>();
                    std::vector<T> gx(x.numel(), T{0});
                    const std::size_t len = (end - begin) * sp.inner;
                    for (std::size_t i = 0; i < sp.outer; ++i) {
                      std::copy(gv.data() + i * len, gv.data() + (i + 1) * len,
                                gx.data() + (i * sp.extent + begin) * sp.inner);
                    }
                    return Tensor::adopt(x.shape(), std::move(gx));
                  });
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined("reshape", x);
  if (numel(shape) != x.numel()) {
    shape_fail("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out = visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto v = x.values<T>();
    return Tensor::adopt(shape, std::vector<T>(v.begin(), v.end()));
  });
  const Shape original = x.shape();
  return record(OpKind::reshape, {x}, out,
                [original](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = visit_dtype(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    auto v = g.values<T>();
                    return Tensor::adopt(original, std::vector<T>(v.begin(), v.end()));
                  });
                });
}

Tensor pad_replicate(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
                     std::size_t right) {
  const ImageDims d = image_dims("pad_replicate", x);
  const std::size_t oh = d.h + top + bottom, ow = d.w + left + right;
  auto src_index = [d, top, left](std::size_t oy, std::size_t ox) {
    const std::size_t iy = std::clamp<long>(static_cast<long>(oy) - static_cast<long>(top), 0, static_cast<long>(d.h) - 1);
    const std::size_t ix = std::clamp<long>(static_cast<long>(ox) - static_cast<long>(left), 0, static_cast<long>(d.w) - 1);
    return iy * d.w + ix;
  };
  Tensor out = visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto v = x.values<T>();
    std::vector<T> o(oh * ow * d.c);
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T* src = v.data() + src_index(oy, ox) * d.c;
        std::copy(src, src + d.c, o.data() + (oy * ow + ox) * d.c);
      }
    return Tensor::adopt(image_shape(x, oh, ow), std::move(o));
  });
  return record(OpKind::pad_replicate, {x}, out,
                [x, d, oh, ow, src_index](const Tensor& g, std::span<const bool>, std::span<Tensor> gin) {
                  gin[0] = visit_dtype(x.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    auto gv = g.values<T>();
                    std::vector<T> gx(x.numel(), T{0});
                    for (std::size_t oy = 0; oy < oh; ++oy)
                      for (std::size_t ox = 0; ox < ow; ++ox) {
                        T* dst = gx.data() + src_index(oy, ox) * d.c;
                        const T* src = gv.data() + (oy * ow + ox) * d.c;
                        for (std::size_t ch = 0; ch < d.c; ++ch) dst[ch] += src[ch];
                      }
                    return Tensor::adopt(x.shape(), std::move(gx));
                  });
                });
}

}  // namespace bistnet::ops
