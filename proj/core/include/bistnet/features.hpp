#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bistnet/checkpoint.hpp"
#include "bistnet/tensor.hpp"

namespace bistnet::features {

// Built-in pyramid: four 3x3 conv+relu stages. Stage 3 emits the 1/4 level and
// stage 4 the 1/8 level.
inline constexpr std::array<std::size_t, 4> kStageChannels{16, 32, 64, 64};
inline constexpr std::array<std::size_t, 4> kStageStrides{2, 2, 1, 2};

struct ExtractorWeights {
  std::array<Tensor, 4> weight;  // [3,3,Cin,Cout]
  std::array<Tensor, 4> bias;    // [Cout]

  // Throws ShapeError when the tensors do not match the stage layout.
  void validate() const;
  ExtractorWeights to(DType dtype) const;
};

// Seeded init: rows of each stage's (Cout x 9*Cin) matrix are orthonormalized
// where Cout allows, then scaled by sqrt(2); biases are zero.
ExtractorWeights make_extractor(std::uint64_t seed, DType dtype = DType::f32);

// Tensor names "extractor.stage<i>.w" / ".b", i in 1..4.
void store_extractor(const ExtractorWeights& weights, Checkpoint& ckpt);
ExtractorWeights load_extractor(const Checkpoint& ckpt);
bool has_extractor(const Checkpoint& ckpt);

enum class PyramidSource { builtin, imported };

struct FeatureLevel {
  std::size_t index;        // 1 -> 1/4 scale, 2 -> 1/8 scale
  std::size_t denominator;  // 4 or 8
  Tensor map;               // [ceil(H/den), ceil(W/den), C]
};

struct FeaturePyramid {
  std::vector<FeatureLevel> levels;
  PyramidSource source = PyramidSource::builtin;

  const FeatureLevel& coarsest() const;
  const FeatureLevel* find(std::size_t index) const;
};

std::size_t level_denominator(std::size_t index);

// frame: network-normalized single channel, [H,W] or [H,W,1]. Differentiable.
FeaturePyramid extract(const Tensor& frame, const ExtractorWeights& weights);
// Luminance in [0,100]; normalizes then extracts.
FeaturePyramid extract_luminance(const Tensor& luminance, const ExtractorWeights& weights);

// `<frame-id>_L<level>.btsr`
std::filesystem::path pyramid_file(const std::filesystem::path& dir, const std::string& frame_id,
                                   std::size_t level);

// Reads exported feature maps. The level of each file comes from its
// `_L<level>` suffix; spatial dims must be ceil(H/den) x ceil(W/den).
FeaturePyramid import_pyramid(std::span<const std::filesystem::path> files, std::size_t frame_h,
                              std::size_t frame_w);

}  // namespace bistnet::features
