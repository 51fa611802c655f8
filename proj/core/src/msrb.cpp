#include "bistnet/msrb.hpp"

#include <cmath>
#include <random>

#include "bistnet/colorspace.hpp"
#include "bistnet/ops.hpp"

namespace bistnet::msrb {

namespace {

constexpr const char* kLevelPrefix[3] = {"msrb.n1.", "msrb.n2.", "msrb.n3."};
constexpr const char* kSharedPrefix = "msrb.shared.";
constexpr double kHeadGain = 0.1;

std::size_t stage_channels(const MsrbConfig& c, std::size_t i) {
  return c.base_channels << std::min<std::size_t>(i, 2);
}

// Input width of a level: the coarsest sees only I_t^{1/4} unless weights are
// shared, in which case it receives two zero channels in place of a coarser
// prediction.
std::size_t level_input_channels(const MsrbConfig& c, std::size_t level) {
  const std::size_t base = input_channels(c.c_seg);
  return (level == 2 && !c.share_level_weights) ? base : base + 2;
}

void add_unet_layout(std::map<std::string, Shape>& out, const std::string& prefix, const MsrbConfig& c,
                     std::size_t in_channels) {
  out[prefix + "enc0.w"] = {3, 3, in_channels, stage_channels(c, 0)};
  out[prefix + "enc0.b"] = {stage_channels(c, 0)};
  for (std::size_t i = 1; i <= c.unet_depth; ++i) {
    const std::string n = prefix + "enc" + std::to_string(i);
    out[n + ".w"] = {3, 3, stage_channels(c, i - 1), stage_channels(c, i)};
    out[n + ".b"] = {stage_channels(c, i)};
  }
  for (std::size_t i = 0; i < c.unet_depth; ++i) {
    const std::string n = prefix + "dec" + std::to_string(i);
    // Decoder i sees the upsampled output of the stage below plus encoder skip i.
    const std::size_t below = (i + 1 == c.unet_depth) ? stage_channels(c, c.unet_depth) : stage_channels(c, i + 1);
    out[n + ".w"] = {3, 3, below + stage_channels(c, i), stage_channels(c, i)};
    out[n + ".b"] = {stage_channels(c, i)};
  }
  out[prefix + "head.w"] = {1, 1, stage_channels(c, 0), 2};
  out[prefix + "head.b"] = {2};
}

bool is_head(const std::string& name) { return name.find(".head.") != std::string::npos; }

Tensor conv(const MsrbModel& m, const std::string& name, const Tensor& x, std::size_t stride) {
  const Tensor& w = m.parameter(name + ".w");
  return ops::conv2d(x, w, m.parameter(name + ".b"), {stride, w.dim(0) / 2});
}

Tensor unet(const MsrbModel& m, const std::string& prefix, const Tensor& x) {
  const std::size_t depth = m.config().unet_depth;
  std::vector<Tensor> skips;
  Tensor h = ops::relu(conv(m, prefix + "enc0", x, 1));
  skips.push_back(h);
  for (std::size_t i = 1; i <= depth; ++i) {
    h = ops::relu(conv(m, prefix + "enc" + std::to_string(i), h, 2));
    skips.push_back(h);
  }
  for (std::size_t i = depth; i-- > 0;) {
    const Tensor& skip = skips[i];
    const Tensor up = ops::resize_bilinear(h, skip.dim(0), skip.dim(1));
    h = ops::relu(conv(m, prefix + "dec" + std::to_string(i), ops::concat({up, skip}, 2), 1));
  }
  return conv(m, prefix + "head", h, 1);
}

Tensor refine(const MsrbModel& m, std::size_t level, const Tensor& level_input, const Tensor& prior_ab) {
  const std::string prefix = m.config().share_level_weights ? kSharedPrefix : kLevelPrefix[level];
  const Tensor residual = unet(m, prefix, level_input);
  return ops::clamp(ops::add(prior_ab, residual), color::kAbMin / color::kAbScale, color::kAbMax / color::kAbScale);
}

}  // namespace

void MsrbConfig::validate() const {
  if (base_channels < 8) throw ConfigError("msrb: base_channels must be >= 8");
  if (unet_depth < 2) throw ConfigError("msrb: unet_depth must be >= 2");
  if (c_seg == 0) throw ConfigError("msrb: c_seg must be positive");
}

std::map<std::string, Shape> MsrbModel::layout(const MsrbConfig& config) {
  config.validate();
  std::map<std::string, Shape> out;
  if (config.share_level_weights) {
    add_unet_layout(out, kSharedPrefix, config, input_channels(config.c_seg) + 2);
  } else {
    for (std::size_t level = 0; level < 3; ++level) {
      add_unet_layout(out, kLevelPrefix[level], config, level_input_channels(config, level));
    }
  }
  return out;
}

MsrbModel::MsrbModel(MsrbConfig config, std::map<std::string, Tensor> params)
    : config_(config), params_(std::move(params)) {}

MsrbModel MsrbModel::initialize(const MsrbConfig& config, std::uint64_t seed, DType dtype) {
  std::mt19937_64 rng(seed);
  std::map<std::string, Tensor> params;
  for (const auto& [name, shape] : layout(config)) {
    if (shape.size() == 1) {
      params[name] = Tensor::zeros(shape, dtype);
      continue;
    }
    const std::size_t fan_in = shape[0] * shape[1] * shape[2];
    // The head starts small rather than at zero so hidden layers receive
    // gradient from the first step.
    const double gain = is_head(name) ? kHeadGain : std::sqrt(2.0);
    std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
    std::vector<double> v(numel(shape));
    for (double& x : v) x = normal(rng);
    params[name] = Tensor::from_values(shape, v, dtype);
  }
  return MsrbModel(config, std::move(params));
}

MsrbModel MsrbModel::zeros(const MsrbConfig& config, DType dtype) {
  std::map<std::string, Tensor> params;
  for (const auto& [name, shape] : layout(config)) params[name] = Tensor::zeros(shape, dtype);
  return MsrbModel(config, std::move(params));
}

MsrbModel MsrbModel::from_checkpoint(const Checkpoint& ckpt, const MsrbConfig& config) {
  std::map<std::string, Tensor> params;
  std::optional<DType> dtype;
  for (const auto& [name, shape] : layout(config)) {
    const Tensor& t = ckpt.at(name);
    if (t.shape() != shape) {
      throw ShapeError("msrb: checkpoint tensor " + name + " has shape " + shape_str(t.shape()) + ", config expects " +
                       shape_str(shape));
    }
    if (dtype && *dtype != t.dtype()) throw DTypeError("msrb: checkpoint mixes dtypes");
    dtype = t.dtype();
    params[name] = t;
  }
  return MsrbModel(config, std::move(params));
}

void MsrbModel::store(Checkpoint& ckpt) const {
  for (const auto& [name, t] : params_) ckpt.set(name, t);
}

MsrbModel MsrbModel::to(DType dtype) const {
  std::map<std::string, Tensor> params;
  for (const auto& [name, t] : params_) params[name] = t.to(dtype);
  return MsrbModel(config_, std::move(params));
}

DType MsrbModel::dtype() const { return params_.begin()->second.dtype(); }

const Tensor& MsrbModel::parameter(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("msrb: no parameter named " + name);
  return it->second;
}

void MsrbModel::set_parameter(const std::string& name, Tensor value) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("msrb: no parameter named " + name);
  if (value.shape() != it->second.shape()) {
    throw ShapeError("msrb: parameter " + name + " expects " + shape_str(it->second.shape()) + ", got " +
                     shape_str(value.shape()));
  }
  it->second = std::move(value);
}

std::size_t MsrbModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

Tensor assemble_input(const Tensor& luminance, const Tensor& fused_ab, const priors::PriorMasks& masks) {
  if (!luminance.defined() || luminance.rank() != 2) throw ShapeError("assemble_input: luminance must be [H,W]");
  const std::size_t h = luminance.dim(0), w = luminance.dim(1);
  auto check = [&](const Tensor& t, std::size_t c, const char* what) {
    if (!t.defined() || t.rank() != 3 || t.dim(0) != h || t.dim(1) != w || (c && t.dim(2) != c)) {
      throw ShapeError(std::string("assemble_input: ") + what + " " +
                       (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")) +
                       " does not match frame " + shape_str({h, w}));
    }
  };
  check(fused_ab, 2, "fused color map");
  check(masks.seg, 0, "segmentation mask");
  check(masks.edge, 1, "edge mask");
  const DType dt = luminance.dtype();
  return ops::concat({ops::reshape(color::normalize_l(luminance), {h, w, 1}), color::normalize_ab(fused_ab.to(dt)),
                      masks.seg.to(dt), masks.edge.to(dt)},
                     2);
}

MsrbOutput forward(const MsrbModel& model, const Tensor& input) {
  const MsrbConfig& c = model.config();
  if (!input.defined() || input.rank() != 3 || input.dim(2) != input_channels(c.c_seg)) {
    throw ShapeError("msrb forward: expected [H,W," + std::to_string(input_channels(c.c_seg)) + "], got " +
                     (input.defined() ? shape_str(input.shape()) : std::string("<undefined>")));
  }
  const std::size_t h = input.dim(0), w = input.dim(1);
  if (h % 4 != 0 || w % 4 != 0) {
    throw ShapeError("msrb forward: spatial size " + shape_str({h, w}) + " not divisible by 4");
  }
  const Tensor in_quarter = ops::resize_bilinear(input, h / 4, w / 4);
  const Tensor in_half = ops::resize_bilinear(input, h / 2, w / 2);
  auto prior = [](const Tensor& x) { return ops::slice(x, 2, 1, 3); };

  MsrbOutput out;
  Tensor coarse_in = in_quarter;
  if (c.share_level_weights) {
    coarse_in = ops::concat({in_quarter, Tensor::zeros({h / 4, w / 4, 2}, input.dtype())}, 2);
  }
  out.quarter = refine(model, 2, coarse_in, prior(in_quarter));
  out.half = refine(model, 1, ops::concat({in_half, ops::resize_bilinear(out.quarter, h / 2, w / 2)}, 2),
                    prior(in_half));
  out.full = refine(model, 0, ops::concat({input, ops::resize_bilinear(out.half, h, w)}, 2), prior(input));
  return out;
}

}  // namespace bistnet::msrb
