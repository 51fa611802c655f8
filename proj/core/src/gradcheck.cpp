#include "bistnet/gradcheck.hpp"

#include <functional>
#include <random>

#include "bistnet/autograd.hpp"
#include "bistnet/colorspace.hpp"
#include "bistnet/features.hpp"
#include "bistnet/losses.hpp"
#include "bistnet/msrb.hpp"
#include "bistnet/ops.hpp"
#include "bistnet/priors.hpp"

namespace bistnet::gradcheck {

namespace {

using Fn = std::function<Tensor(const Tensor&)>;

class Suite {
 public:
  explicit Suite(const SuiteOptions& o) : o_(o), rng_(o.seed) {}

  Tensor uniform(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(numel(shape));
    for (double& x : v) x = d(rng_);
    return Tensor::from_values(shape, v, DType::f64);
  }

  // Contracts an op's output with fixed random weights so every output
  // element contributes a distinct amount to the scalar.
  Fn scalarize(std::function<Tensor(const Tensor&)> op, Shape out_shape) {
    const Tensor r = uniform(out_shape);
    return [op, r](const Tensor& x) { return ops::sum(ops::mul(op(x), r)); };
  }

  void check(const std::string& name, const Fn& f, const Tensor& x, std::vector<std::size_t> coords = {}) {
    const double err = finite_difference_check(f, x, o_.eps, coords);
    results_.push_back({name, err, err < o_.tolerance});
  }

  std::vector<std::size_t> sample_coords(std::size_t n, std::size_t count) {
    std::vector<std::size_t> out;
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    for (std::size_t i = 0; i < std::min(n, count); ++i) out.push_back(count >= n ? i : d(rng_));
    return out;
  }

  std::vector<CaseResult> run() {
    primitives();
    losses();
    network();
    return std::move(results_);
  }

 private:
  void primitives() {
    const std::size_t n = o_.size;
    const Shape img{n, n, 3};
    const Tensor x = uniform(img);
    const Tensor y = uniform(img);

    check("op.add", scalarize([y](const Tensor& t) { return ops::add(t, y); }, img), x);
    check("op.sub", scalarize([y](const Tensor& t) { return ops::sub(y, t); }, img), x);
    check("op.mul", scalarize([y](const Tensor& t) { return ops::mul(t, y); }, img), x);
    check("op.scalar_mul", scalarize([](const Tensor& t) { return ops::scalar_mul(t, -1.7); }, img), x);
    check("op.scalar_add", scalarize([](const Tensor& t) { return ops::square(ops::scalar_add(t, 0.3)); }, img), x);
    check("op.relu", scalarize([](const Tensor& t) { return ops::relu(t); }, img), x);
    check("op.abs", scalarize([](const Tensor& t) { return ops::abs(t); }, img), x);
    check("op.square", scalarize([](const Tensor& t) { return ops::square(t); }, img), x);
    check("op.sqrt", scalarize([](const Tensor& t) { return ops::sqrt(t); }, img), uniform(img, 0.2, 2.0));
    check("op.clamp", scalarize([](const Tensor& t) { return ops::clamp(t, -0.5, 0.6); }, img), x);
    check("op.sum", [](const Tensor& t) { return ops::sum(ops::square(t)); }, x);
    check("op.mean", [](const Tensor& t) { return ops::mean(ops::square(t)); }, x);

    const Tensor a = uniform({n, 5}), b = uniform({5, n});
    check("op.matmul.lhs", scalarize([b](const Tensor& t) { return ops::matmul(t, b); }, {n, n}), a);
    check("op.matmul.rhs", scalarize([a](const Tensor& t) { return ops::matmul(a, t); }, {n, n}), b);
    check("op.transpose", scalarize([](const Tensor& t) { return ops::transpose(t); }, {5, n}), a);
    check("op.softmax_rows", scalarize([](const Tensor& t) { return ops::softmax_rows(ops::scalar_mul(t, 3.0)); },
                                       {n, 5}),
          a);

    const Tensor w = uniform({3, 3, 3, 4}), bias = uniform({4});
    const std::size_t half = (n + 2 - 3) / 2 + 1;
    const ops::Conv2dOptions strided{2, 1};
    check("op.conv2d.input", scalarize([w, bias](const Tensor& t) { return ops::conv2d(t, w, bias, {1, 1}); },
                                       {n, n, 4}),
          x);
    check("op.conv2d.weight",
          scalarize([x, bias, strided](const Tensor& t) { return ops::conv2d(x, t, bias, strided); }, {half, half, 4}),
          w);
    check("op.conv2d.bias",
          scalarize([x, w, strided](const Tensor& t) { return ops::conv2d(x, w, t, strided); }, {half, half, 4}),
          bias);

    check("op.bilinear_resample.down",
          scalarize([](const Tensor& t) { return ops::resize_bilinear(t, 5, 7); }, {5, 7, 3}), x);
    check("op.bilinear_resample.up",
          scalarize([n](const Tensor& t) { return ops::resize_bilinear(t, 2 * n, 2 * n - 3); }, {2 * n, 2 * n - 3, 3}),
          x);
    const Tensor flow = uniform({n, n, 2}, -1.7, 1.7);
    check("op.flow_warp", scalarize([flow](const Tensor& t) { return ops::flow_warp(t, flow); }, img), x);
    check("op.concat", scalarize([y](const Tensor& t) { return ops::concat({y, t, t}, 2); }, {n, n, 9}), x);
    check("op.slice", scalarize([](const Tensor& t) { return ops::slice(t, 1, 2, 6); }, {n, 4, 3}), x);
    check("op.reshape", scalarize([n](const Tensor& t) { return ops::reshape(t, {n * n, 3}); }, {n * n, 3}), x);
    check("op.pad_replicate",
          scalarize([](const Tensor& t) { return ops::pad_replicate(t, 1, 2, 3, 0); }, {n + 3, n + 3, 3}), x);
  }

  void losses() {
    const std::size_t n = o_.size;
    const Tensor lum = uniform({n, n}, 0.0, 100.0);
    const Tensor z_lab = ops::concat({ops::reshape(uniform({n, n}, 0.0, 100.0), {n, n, 1}), uniform({n, n, 2})}, 2);
    check("loss.edge", [lum](const Tensor& t) { return loss::edge_loss(lum, t); }, z_lab);

    const Tensor z = uniform({n, n, 2}), target = uniform({n, n, 2});
    check("loss.hem", [target](const Tensor& t) { return loss::hem_loss(t, target, 0.5); }, z);
    check("loss.content", [target](const Tensor& t) { return loss::content_loss(t, target); }, z);

    const features::ExtractorWeights extractor = features::make_extractor(o_.seed + 1, DType::f64);
    const Tensor l_norm = ops::reshape(uniform({n, n}), {n, n, 1});
    const Tensor y3 = ops::concat({l_norm, target}, 2);
    check("loss.perceptual",
          [=](const Tensor& t) { return loss::perceptual_loss(ops::concat({l_norm, t}, 2), y3, extractor); }, z);

    const Tensor prev = uniform({n, n, 2});
    const Tensor flow = uniform({n, n, 2}, -2.3, 2.3);
    check("loss.temporal", [=](const Tensor& t) { return loss::temporal_loss(t, prev, flow); }, z);
    check("loss.temporal.no_flow", [=](const Tensor& t) { return loss::temporal_loss(t, prev); }, z);

    loss::FrameLossInputs in;
    in.luminance = lum;
    in.target_ab = target;
    in.prev_pred_ab = prev;
    in.flow = flow;
    check("loss.total",
          [=](const Tensor& t) {
            loss::FrameLossInputs frame = in;
            frame.pred_ab = t;
            return loss::total_loss(frame, extractor, loss::LossWeights{});
          },
          z);
  }

  void network() {
    const std::size_t n = o_.size;
    msrb::MsrbConfig cfg;
    cfg.base_channels = 8;
    cfg.unet_depth = 2;
    cfg.c_seg = 3;
    msrb::MsrbModel model = msrb::MsrbModel::initialize(cfg, o_.seed + 2, DType::f64);
    // A non-zero head so the residual path carries gradient.
    for (const char* lvl : {"msrb.n1.", "msrb.n2.", "msrb.n3."}) {
      const std::string head = std::string(lvl) + "head.w";
      model.set_parameter(head, ops::scalar_mul(uniform(model.parameter(head).shape()), 0.05));
    }
    const Tensor lum = uniform({n, n}, 5.0, 95.0);
    priors::PriorMasks masks;
    masks.seg = Tensor::full({n, n, cfg.c_seg}, 1.0 / static_cast<double>(cfg.c_seg), DType::f64);
    {
      NoGradGuard no_grad;
      masks.edge = priors::sobel_edge_map(lum);
    }
    const Tensor prior_ab = uniform({n, n, 2}, -60.0, 60.0);
    const Tensor input = msrb::assemble_input(lum, prior_ab, masks);
    const Tensor target = uniform({n, n, 2}, -0.5, 0.5);
    const Tensor prev = uniform({n, n, 2}, -0.5, 0.5);
    const features::ExtractorWeights extractor = features::make_extractor(o_.seed + 3, DType::f64);

    auto pipeline_loss = [=](const msrb::MsrbModel& m, const Tensor& in) {
      loss::FrameLossInputs frame;
      frame.luminance = lum;
      frame.pred_ab = msrb::forward(m, in).full;
      frame.target_ab = target;
      frame.prev_pred_ab = prev;
      return loss::total_loss(frame, extractor, loss::LossWeights{});
    };
    check("pipeline.input", [=](const Tensor& t) { return pipeline_loss(model, t); }, input,
          sample_coords(input.numel(), 48));
    for (const char* name : {"msrb.n1.enc0.w", "msrb.n1.head.w", "msrb.n2.dec0.w", "msrb.n3.enc2.w",
                             "msrb.n3.head.b"}) {
      const Tensor p = model.parameter(name);
      check(std::string("pipeline.") + name,
            [=](const Tensor& t) {
              msrb::MsrbModel m = model;
              m.set_parameter(name, t);
              return pipeline_loss(m, input);
            },
            p, sample_coords(p.numel(), 24));
    }
  }

  SuiteOptions o_;
  std::mt19937_64 rng_;
  std::vector<CaseResult> results_;
};

}  // namespace

std::vector<CaseResult> run_suite(const SuiteOptions& options) {
  if (options.size < 8 || options.size % 4 != 0) throw ConfigError("gradcheck: size must be a multiple of 4, at least 8");
  return Suite(options).run();
}

}  // namespace bistnet::gradcheck
