#include "bistnet/metrics.hpp"

#include <cmath>
#include "json.hpp"

#include "bistnet/parallel.hpp"

namespace bistnet::metrics {

namespace {

void require_rgb(const Tensor& t, const char* op) {
  if (!t.defined() || t.rank() != 3 || t.dim(2) != 3) {
    throw ShapeError(std::string(op) + ": expected [H,W,3], got " +
                     (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")));
  }
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double c = static_cast<double>(size - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable valid-region filter of an h x w image.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t k = g.size(), oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += g[i] * img[r * w + c + i];
      rows[r * ow + c] = acc;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += g[i] * rows[(r + i) * ow + c];
      out[r * ow + c] = acc;
    }
  }
  return out;
}

double log_of(double v, LogBase base) { return base == LogBase::e ? std::log(v) : std::log2(v); }

std::vector<std::vector<double>> histograms(const Tensor& frame, std::size_t bins) {
  require_rgb(frame, "cdc");
  std::vector<std::vector<double>> h(3, std::vector<double>(bins, 0.0));
  const std::vector<double> v = frame.to_vector();
  const std::size_t pixels = v.size() / 3;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double x = v[p * 3 + c];
      if (!(x >= 0.0 && x <= 1.0)) throw Error("cdc: pixel value outside [0,1]");
      const auto bin = std::min(bins - 1, static_cast<std::size_t>(x * static_cast<double>(bins)));
      h[c][bin] += 1.0;
    }
  }
  for (auto& ch : h) {
    for (double& x : ch) x /= static_cast<double>(pixels);
  }
  return h;
}

}  // namespace

std::optional<double> psnr(const Tensor& pred, const Tensor& gt) {
  require_rgb(pred, "psnr");
  if (pred.shape() != gt.shape()) {
    throw ShapeError("psnr: shapes " + shape_str(pred.shape()) + " and " + shape_str(gt.shape()) + " differ");
  }
  const std::vector<double> a = pred.to_vector(), b = gt.to_vector();
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  if (se == 0.0) return std::nullopt;
  return 10.0 * std::log10(static_cast<double>(a.size()) / se);
}

Tensor rgb_to_gray(const Tensor& rgb) {
  require_rgb(rgb, "rgb_to_gray");
  const std::vector<double> v = rgb.to_vector();
  std::vector<double> out(v.size() / 3);
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = 0.299 * v[p * 3] + 0.587 * v[p * 3 + 1] + 0.114 * v[p * 3 + 2];
  }
  return Tensor::adopt({rgb.dim(0), rgb.dim(1)}, std::move(out));
}

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& o) {
  if (!a.defined() || !b.defined() || a.rank() != 2 || a.shape() != b.shape()) {
    throw ShapeError("ssim: expected two [H,W] images of equal shape");
  }
  const std::size_t h = a.dim(0), w = a.dim(1);
  if (h < o.window || w < o.window) {
    throw ShapeError("ssim: image " + shape_str(a.shape()) + " smaller than the " + std::to_string(o.window) +
                     "x" + std::to_string(o.window) + " window");
  }
  const std::vector<double> x = a.to_vector(), y = b.to_vector();
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const std::vector<double> g = gaussian_window(o.window, o.sigma);
  const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
  const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
  const double c1 = (o.k1 * o.data_range) * (o.k1 * o.data_range);
  const double c2 = (o.k2 * o.data_range) * (o.k2 * o.data_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

double jensen_shannon(const std::vector<double>& p, const std::vector<double>& q, LogBase base) {
  if (p.size() != q.size()) throw ShapeError("jensen_shannon: histogram sizes differ");
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) out += 0.5 * p[i] * log_of(p[i] / m, base);
    if (q[i] > 0.0) out += 0.5 * q[i] * log_of(q[i] / m, base);
  }
  return out;
}

double cdc(const std::vector<Tensor>& frames, const CdcOptions& o) {
  if (frames.size() < o.min_frames) {
    throw Error("cdc: needs at least " + std::to_string(o.min_frames) + " frames, got " +
                std::to_string(frames.size()));
  }
  if (o.bins == 0 || o.strides.empty()) throw ConfigError("cdc: bins and strides must be non-empty");
  std::vector<std::vector<std::vector<double>>> hist(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) hist[t] = histograms(frames[t], o.bins);

  double total = 0.0;
  for (std::size_t s : o.strides) {
    if (s == 0 || s >= frames.size()) {
      throw ConfigError("cdc: stride " + std::to_string(s) + " invalid for " + std::to_string(frames.size()) +
                        " frames");
    }
    double acc = 0.0;
    for (std::size_t t = 0; t + s < frames.size(); ++t) {
      double pair = 0.0;
      for (std::size_t c = 0; c < 3; ++c) pair += jensen_shannon(hist[t][c], hist[t + s][c], o.log_base);
      acc += pair / 3.0;
    }
    total += acc / static_cast<double>(frames.size() - s);
  }
  return total / static_cast<double>(o.strides.size());
}

EvalReport evaluate(const std::vector<std::string>& ids, const std::vector<Tensor>& pred,
                    const std::vector<Tensor>& gt, const CdcOptions& cdc_options) {
  if (pred.size() != gt.size() || ids.size() != pred.size()) {
    throw Error("evaluate: " + std::to_string(pred.size()) + " predicted frames vs " + std::to_string(gt.size()) +
                " ground-truth frames");
  }
  if (pred.empty()) throw Error("evaluate: no frames");
  EvalReport report;
  report.frames.resize(pred.size());
  parallel_for(pred.size(), [&](std::size_t i) {
    FrameScore& f = report.frames[i];
    f.id = ids[i];
    f.psnr = psnr(pred[i], gt[i]);
    f.ssim = ssim(rgb_to_gray(pred[i]), rgb_to_gray(gt[i]));
  });
  double psnr_sum = 0.0, ssim_sum = 0.0;
  std::size_t finite = 0;
  for (const FrameScore& f : report.frames) {
    ssim_sum += f.ssim;
    if (f.psnr) {
      psnr_sum += *f.psnr;
      ++finite;
    } else {
      ++report.identical_frames;
    }
  }
  if (finite) report.psnr_mean = psnr_sum / static_cast<double>(finite);
  report.ssim_mean = ssim_sum / static_cast<double>(pred.size());
  if (pred.size() >= cdc_options.min_frames) report.cdc = cdc(pred, cdc_options);
  return report;
}

std::string EvalReport::to_json() const {
  using nlohmann::json;
  auto psnr_value = [](const std::optional<double>& v) { return v ? json(*v) : json("identical"); };
  json j;
  j["psnr_mean"] = psnr_value(psnr_mean);
  j["ssim_mean"] = ssim_mean;
  j["cdc"] = cdc ? json(*cdc) : json(nullptr);
  j["frame_count"] = frames.size();
  j["identical_frames"] = identical_frames;
  j["frames"] = json::array();
  for (const FrameScore& f : frames) {
    j["frames"].push_back({{"id", f.id}, {"psnr", psnr_value(f.psnr)}, {"ssim", f.ssim}});
  }
  return j.dump(2);
}

}  // namespace bistnet::metrics
