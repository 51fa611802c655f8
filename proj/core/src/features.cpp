#include "bistnet/features.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <regex>

#include "bistnet/btsr.hpp"
#include "bistnet/colorspace.hpp"
#include "bistnet/ops.hpp"

namespace bistnet::features {

namespace {

std::size_t stage_input_channels(std::size_t stage) { return stage == 0 ? 1 : kStageChannels[stage - 1]; }

std::string stage_name(std::size_t stage, const char* part) {
  return "extractor.stage" + std::to_string(stage + 1) + "." + part;
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

void ExtractorWeights::validate() const {
  for (std::size_t s = 0; s < 4; ++s) {
    const Shape want_w{3, 3, stage_input_channels(s), kStageChannels[s]};
    const Shape want_b{kStageChannels[s]};
    if (!weight[s].defined() || weight[s].shape() != want_w || !bias[s].defined() || bias[s].shape() != want_b) {
      throw ShapeError("extractor: stage " + std::to_string(s + 1) + " expects weight " + shape_str(want_w) +
                       " and bias " + shape_str(want_b) + ", got " +
                       (weight[s].defined() ? shape_str(weight[s].shape()) : std::string("<missing>")) + " and " +
                       (bias[s].defined() ? shape_str(bias[s].shape()) : std::string("<missing>")));
    }
    if (weight[s].dtype() != weight[0].dtype() || bias[s].dtype() != weight[0].dtype()) {
      throw DTypeError("extractor: mixed dtypes");
    }
  }
}

ExtractorWeights ExtractorWeights::to(DType dtype) const {
  ExtractorWeights out;
  for (std::size_t s = 0; s < 4; ++s) {
    out.weight[s] = weight[s].to(dtype);
    out.bias[s] = bias[s].to(dtype);
  }
  return out;
}

ExtractorWeights make_extractor(std::uint64_t seed, DType dtype) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ExtractorWeights out;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t cin = stage_input_channels(s), cout = kStageChannels[s];
    const std::size_t fan_in = 9 * cin;
    // rows[co] is the flattened (ky,kx,ci) filter of output channel co.
    std::vector<std::vector<double>> rows(cout, std::vector<double>(fan_in));
    for (auto& row : rows)
      for (auto& v : row) v = normal(rng);
    const std::size_t orthogonal = std::min(cout, fan_in);
    for (std::size_t i = 0; i < cout; ++i) {
      if (i < orthogonal) {
        for (std::size_t j = 0; j < i; ++j) {
          double dot = 0.0;
          for (std::size_t k = 0; k < fan_in; ++k) dot += rows[i][k] * rows[j][k];
          for (std::size_t k = 0; k < fan_in; ++k) rows[i][k] -= dot * rows[j][k];
        }
      }
      double norm = 0.0;
      for (double v : rows[i]) norm += v * v;
      norm = std::sqrt(norm);
      for (double& v : rows[i]) v /= norm;
    }
    std::vector<double> w(fan_in * cout);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t k = 0; k < fan_in; ++k) w[k * cout + co] = std::sqrt(2.0) * rows[co][k];
    out.weight[s] = Tensor::from_values({3, 3, cin, cout}, w, dtype);
    out.bias[s] = Tensor::zeros({cout}, dtype);
  }
  return out;
}

void store_extractor(const ExtractorWeights& weights, Checkpoint& ckpt) {
  weights.validate();
  for (std::size_t s = 0; s < 4; ++s) {
    ckpt.set(stage_name(s, "w"), weights.weight[s]);
    ckpt.set(stage_name(s, "b"), weights.bias[s]);
  }
}

bool has_extractor(const Checkpoint& ckpt) { return ckpt.contains(stage_name(0, "w")); }

ExtractorWeights load_extractor(const Checkpoint& ckpt) {
  ExtractorWeights out;
  for (std::size_t s = 0; s < 4; ++s) {
    out.weight[s] = ckpt.at(stage_name(s, "w"));
    out.bias[s] = ckpt.at(stage_name(s, "b"));
  }
  out.validate();
  return out;
}

const FeatureLevel& FeaturePyramid::coarsest() const {
  if (levels.empty()) throw Error("feature pyramid: no levels");
  return *std::max_element(levels.begin(), levels.end(),
                           [](const FeatureLevel& a, const FeatureLevel& b) { return a.denominator < b.denominator; });
}

const FeatureLevel* FeaturePyramid::find(std::size_t index) const {
  for (const auto& l : levels)
    if (l.index == index) return &l;
  return nullptr;
}

std::size_t level_denominator(std::size_t index) {
  if (index != 1 && index != 2) throw Error("feature pyramid: unknown level " + std::to_string(index));
  return index == 1 ? 4 : 8;
}

FeaturePyramid extract(const Tensor& frame, const ExtractorWeights& weights) {
  weights.validate();
  if (!frame.defined() || frame.rank() < 2 || frame.rank() > 3 || (frame.rank() == 3 && frame.dim(2) != 1)) {
    throw ShapeError("extract: expected [H,W] or [H,W,1] frame, got " +
                     (frame.defined() ? shape_str(frame.shape()) : std::string("<undefined>")));
  }
  if (frame.dtype() != weights.weight[0].dtype()) throw DTypeError("extract: frame and weights differ in dtype");
  Tensor x = frame.rank() == 2 ? ops::reshape(frame, {frame.dim(0), frame.dim(1), 1}) : frame;
  FeaturePyramid pyramid;
  for (std::size_t s = 0; s < 4; ++s) {
    x = ops::relu(ops::conv2d(x, weights.weight[s], weights.bias[s], {kStageStrides[s], 1}));
    if (s == 2) pyramid.levels.push_back({1, 4, x});
    if (s == 3) pyramid.levels.push_back({2, 8, x});
  }
  pyramid.source = PyramidSource::builtin;
  return pyramid;
}

FeaturePyramid extract_luminance(const Tensor& luminance, const ExtractorWeights& weights) {
  return extract(color::normalize_l(luminance), weights);
}

std::filesystem::path pyramid_file(const std::filesystem::path& dir, const std::string& frame_id,
                                   std::size_t level) {
  return dir / (frame_id + "_L" + std::to_string(level) + ".btsr");
}

FeaturePyramid import_pyramid(std::span<const std::filesystem::path> files, std::size_t frame_h,
                              std::size_t frame_w) {
  if (files.empty()) throw Error("import_pyramid: no files given");
  static const std::regex level_suffix(R"(.*_L([0-9]+)\.btsr)");
  FeaturePyramid pyramid;
  pyramid.source = PyramidSource::imported;
  for (const auto& path : files) {
    std::smatch m;
    const std::string name = path.filename().string();
    if (!std::regex_match(name, m, level_suffix)) {
      throw FormatError("import_pyramid: " + name + " does not follow <frame-id>_L<level>.btsr");
    }
    const std::size_t index = std::stoul(m[1].str());
    const std::size_t den = level_denominator(index);
    Tensor map = btsr::read(path);
    const Shape want{ceil_div(frame_h, den), ceil_div(frame_w, den)};
    if (map.rank() != 3 || map.dim(0) != want[0] || map.dim(1) != want[1]) {
      throw ShapeError("import_pyramid: " + name + " has shape " + shape_str(map.shape()) + ", expected " +
                       shape_str(want) + "xC for a " + std::to_string(frame_h) + "x" + std::to_string(frame_w) +
                       " frame");
    }
    if (pyramid.find(index)) throw FormatError("import_pyramid: duplicate level " + std::to_string(index));
    pyramid.levels.push_back({index, den, map.to(DType::f32)});
  }
  std::sort(pyramid.levels.begin(), pyramid.levels.end(),
            [](const FeatureLevel& a, const FeatureLevel& b) { return a.index < b.index; });
  return pyramid;
}

}  // namespace bistnet::features
