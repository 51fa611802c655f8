#include "bistnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bistnet/btsr.hpp"
#include "bistnet/colorspace.hpp"
#include "bistnet/ops.hpp"
#include "bistnet/priors.hpp"

namespace bistnet::loss {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.defined() || !b.defined()) throw ShapeError(std::string(op) + ": undefined input");
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  }
  if (a.dtype() != b.dtype()) throw DTypeError(std::string(op) + ": dtypes differ");
}

void require_image(const Tensor& t, const char* op) {
  if (t.rank() != 3) throw ShapeError(std::string(op) + ": expected [H,W,C], got " + shape_str(t.shape()));
}

Tensor or_zero(const Tensor& t, DType dtype) { return t.defined() ? t : Tensor::scalar(0.0, dtype); }

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda_edge, lambda_hem, lambda_c, lambda_percep, lambda_temporal}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and non-negative");
  }
  if (!(hem_fraction > 0.0 && hem_fraction <= 1.0)) throw ConfigError("hem_fraction must lie in (0, 1]");
}

Tensor edge_loss(const Tensor& x, const Tensor& z) {
  if (!x.defined() || x.rank() != 2) throw ShapeError("edge_loss: luminance must be [H,W]");
  if (!z.defined() || z.rank() != 3 || z.dim(0) != x.dim(0) || z.dim(1) != x.dim(1) || z.dim(2) < 1) {
    throw ShapeError("edge_loss: output " + (z.defined() ? shape_str(z.shape()) : std::string("<undefined>")) +
                     " does not match luminance " + shape_str(x.shape()));
  }
  const Tensor diff = ops::sub(priors::sobel_magnitude(x), priors::sobel_magnitude(ops::slice(z, 2, 0, 1)));
  return ops::sqrt(ops::mean(ops::square(diff)));
}

Tensor hem_loss(const Tensor& z, const Tensor& y, double fraction) {
  require_same(z, y, "hem_loss");
  require_image(z, "hem_loss");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("hem_loss: fraction must lie in (0, 1]");
  const std::size_t h = z.dim(0), w = z.dim(1), c = z.dim(2);
  const Tensor abs_diff = ops::abs(ops::sub(z, y));
  Tensor residual = ops::slice(abs_diff, 2, 0, 1);
  for (std::size_t k = 1; k < c; ++k) residual = ops::add(residual, ops::slice(abs_diff, 2, k, k + 1));

  const std::size_t n = h * w;
  // Guard against f * n landing a hair above an integer.
  const auto k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)), 1, n);
  const std::vector<double> r = residual.to_vector();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r[a] > r[b]; });
  std::vector<double> mask(n, 0.0);
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 1.0;

  const Tensor selected = ops::mul(residual, Tensor::from_values({h, w, 1}, mask, z.dtype()));
  return ops::scalar_mul(ops::sum(selected), 1.0 / static_cast<double>(k));
}

Tensor content_loss(const Tensor& z, const Tensor& y) {
  require_same(z, y, "content_loss");
  return ops::mean(ops::abs(ops::sub(z, y)));
}

Tensor perceptual_loss(const Tensor& z, const Tensor& y, const features::ExtractorWeights& extractor) {
  require_same(z, y, "perceptual_loss");
  require_image(z, "perceptual_loss");
  const features::ExtractorWeights net =
      extractor.weight[0].dtype() == z.dtype() ? extractor : extractor.to(z.dtype());
  std::vector<Tensor> terms;
  for (std::size_t ch = 0; ch < z.dim(2); ++ch) {
    const features::FeaturePyramid fz = features::extract(ops::slice(z, 2, ch, ch + 1), net);
    const features::FeaturePyramid fy = features::extract(ops::slice(y, 2, ch, ch + 1), net);
    for (std::size_t l = 0; l < fz.levels.size(); ++l) {
      terms.push_back(ops::mean(ops::abs(ops::sub(fz.levels[l].map, fy.levels[l].map))));
    }
  }
  Tensor acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ops::add(acc, terms[i]);
  return ops::scalar_mul(acc, 1.0 / static_cast<double>(terms.size()));
}

Tensor temporal_loss(const Tensor& z, const Tensor& prev, const std::optional<Tensor>& flow) {
  require_same(z, prev, "temporal_loss");
  require_image(z, "temporal_loss");
  if (!flow) return ops::mean(ops::abs(ops::sub(z, prev)));
  const std::size_t h = z.dim(0), w = z.dim(1), c = z.dim(2);
  if (flow->shape() != Shape{h, w, 2}) {
    throw ShapeError("temporal_loss: flow " + shape_str(flow->shape()) + " does not match frame " +
                     shape_str({h, w}));
  }
  const Tensor f = flow->to(z.dtype());
  const std::vector<double> fv = f.to_vector();
  std::vector<double> mask(h * w * c, 0.0);
  std::size_t valid = 0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t col = 0; col < w; ++col) {
      const std::size_t p = r * w + col;
      const double sx = static_cast<double>(col) + fv[p * 2];
      const double sy = static_cast<double>(r) + fv[p * 2 + 1];
      if (sx < 0.0 || sy < 0.0 || sx > static_cast<double>(w - 1) || sy > static_cast<double>(h - 1)) continue;
      ++valid;
      for (std::size_t k = 0; k < c; ++k) mask[p * c + k] = 1.0;
    }
  }
  const Tensor diff = ops::abs(ops::sub(z, ops::flow_warp(prev, f)));
  if (valid == h * w) return ops::mean(diff);
  if (valid == 0) return ops::scalar_mul(ops::sum(diff), 0.0);
  const Tensor masked = ops::mul(diff, Tensor::from_values(z.shape(), mask, z.dtype()));
  return ops::scalar_mul(ops::sum(masked), 1.0 / static_cast<double>(valid * c));
}

std::filesystem::path flow_file(const std::filesystem::path& dir, const std::string& frame_id) {
  return dir / (frame_id + "_flow.btsr");
}

Tensor load_flow(const std::filesystem::path& path, std::size_t height, std::size_t width) {
  const Tensor t = btsr::read(path);
  if (t.shape() != Shape{height, width, 2}) {
    throw FormatError("flow file " + path.filename().string() + ": shape " + shape_str(t.shape()) + ", expected " +
                      shape_str({height, width, 2}));
  }
  for (double v : t.to_vector()) {
    if (!std::isfinite(v)) throw FormatError("flow file " + path.filename().string() + ": non-finite value");
  }
  return t.to(DType::f32);
}

double weighted_total(double edge, double hem, double composite, const LossWeights& w) {
  return w.lambda_edge * edge + w.lambda_hem * hem + w.lambda_c * composite;
}

Tensor combine(const LossTerms& terms, const LossWeights& w, LossReport* report) {
  w.validate();
  DType dt = DType::f32;
  for (const Tensor* t : {&terms.edge, &terms.hem, &terms.content, &terms.perceptual, &terms.temporal}) {
    if (t->defined()) {
      if (t->numel() != 1) throw ShapeError("combine: loss terms must be scalars");
      dt = t->dtype();
    }
  }
  const Tensor edge = or_zero(terms.edge, dt), hem = or_zero(terms.hem, dt), content = or_zero(terms.content, dt),
               percep = or_zero(terms.perceptual, dt), temporal = or_zero(terms.temporal, dt);
  const Tensor composite = ops::add(content, ops::add(ops::scalar_mul(percep, w.lambda_percep),
                                                      ops::scalar_mul(temporal, w.lambda_temporal)));
  const Tensor total =
      ops::add(ops::add(ops::scalar_mul(edge, w.lambda_edge), ops::scalar_mul(hem, w.lambda_hem)),
               ops::scalar_mul(composite, w.lambda_c));
  if (report) {
    report->edge = edge.item();
    report->hem = hem.item();
    report->content = content.item();
    report->perceptual = percep.item();
    report->temporal = temporal.item();
    report->composite = composite.item();
    report->total = total.item();
  }
  return total;
}

Tensor total_loss(const FrameLossInputs& in, const features::ExtractorWeights& extractor, const LossWeights& w,
                  LossReport* report) {
  w.validate();
  if (!in.luminance.defined() || in.luminance.rank() != 2) throw ShapeError("total_loss: luminance must be [H,W]");
  require_same(in.pred_ab, in.target_ab, "total_loss");
  const std::size_t h = in.luminance.dim(0), wd = in.luminance.dim(1);
  if (in.pred_ab.shape() != Shape{h, wd, 2}) {
    throw ShapeError("total_loss: ab " + shape_str(in.pred_ab.shape()) + " does not match luminance " +
                     shape_str(in.luminance.shape()));
  }
  const Tensor lum = in.luminance.to(in.pred_ab.dtype());
  const Tensor l_plane = ops::reshape(lum, {h, wd, 1});
  const Tensor l_norm = color::normalize_l(l_plane);

  LossTerms terms;
  terms.edge = edge_loss(lum, ops::concat({l_plane, in.pred_ab}, 2));
  terms.hem = hem_loss(in.pred_ab, in.target_ab, w.hem_fraction);
  terms.content = content_loss(in.pred_ab, in.target_ab);
  terms.perceptual = perceptual_loss(ops::concat({l_norm, in.pred_ab}, 2), ops::concat({l_norm, in.target_ab}, 2),
                                     extractor);
  if (in.prev_pred_ab.defined()) terms.temporal = temporal_loss(in.pred_ab, in.prev_pred_ab, in.flow);
  return combine(terms, w, report);
}

}  // namespace bistnet::loss
