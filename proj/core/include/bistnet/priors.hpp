#pragma once

#include <filesystem>
#include <optional>

#include "bistnet/tensor.hpp"

// Segmentation and edge priors that guide the refinement network near
// object boundaries.
namespace bistnet::priors {

enum class SegSource { imported, uniform_fallback };
enum class EdgeSource { imported, builtin_sobel };

struct PriorMasks {
  Tensor seg;   // [H,W,C_seg], per-pixel probabilities summing to 1
  Tensor edge;  // [H,W,1] in [0,1]
  SegSource seg_source = SegSource::uniform_fallback;
  EdgeSource edge_source = EdgeSource::builtin_sobel;

  // Throws Error if the invariants above do not hold.
  void validate() const;
};

// Tolerance on the per-pixel probability sum of imported segmentation.
inline constexpr double kSegSumTolerance = 1e-2;

// Gradient magnitude sqrt(Gx^2 + Gy^2) of the 3x3 Sobel pair with edge
// replication at the border. x: [H,W] or [H,W,1] -> [H,W,1]. Differentiable.
Tensor sobel_magnitude(const Tensor& x);

// sobel_magnitude normalized by its frame maximum; all zeros when the maximum
// is below 1e-8.
Tensor sobel_edge_map(const Tensor& luminance);

// Loads `<frame-id>_seg.btsr` / `<frame-id>_edge.btsr` style files when given,
// otherwise falls back to uniform 1/c_seg probabilities and the Sobel map of
// `luminance` ([H,W]). Imported segmentation within kSegSumTolerance of a unit
// sum is renormalized; anything further off is rejected.
PriorMasks load_masks(const std::optional<std::filesystem::path>& seg_file,
                      const std::optional<std::filesystem::path>& edge_file, const Tensor& luminance,
                      std::size_t c_seg);

std::filesystem::path seg_file(const std::filesystem::path& dir, const std::string& frame_id);
std::filesystem::path edge_file(const std::filesystem::path& dir, const std::string& frame_id);

}  // namespace bistnet::priors
