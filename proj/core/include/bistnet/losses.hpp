#pragma once

#include <filesystem>
#include <optional>

#include "bistnet/features.hpp"
#include "bistnet/tensor.hpp"

namespace bistnet::loss {

struct LossWeights {
  double lambda_edge = 2.0;
  double lambda_hem = 2.0;
  double lambda_c = 1.0;
  double hem_fraction = 0.5;
  double lambda_percep = 0.1;
  double lambda_temporal = 1.0;

  void validate() const;
};

// x: [H,W] luminance, z: [H,W,3] LAB with luminance in channel 0.
// sqrt(mean over pixels of (S(x) - S(z_L))^2) with S the Sobel magnitude.
Tensor edge_loss(const Tensor& x, const Tensor& z);

// Mean of the ceil(fraction * H * W) largest per-pixel residuals sum_c |z - y|.
// Ties at the cutoff keep the lower flat index.
Tensor hem_loss(const Tensor& z, const Tensor& y, double fraction);

// Mean absolute error over every element.
Tensor content_loss(const Tensor& z, const Tensor& y);

// z, y: [H,W,C] network-scaled images. Each channel passes through the
// single-channel extractor; the result is the mean L1 distance over channels
// and pyramid levels.
Tensor perceptual_loss(const Tensor& z, const Tensor& y, const features::ExtractorWeights& extractor);

// Mean L1 between z and prev warped by `flow` ([H,W,2], pixel displacements,
// z(p) compared with prev(p + flow(p))), restricted to pixels whose target lies
// in frame. Without flow the frames are compared directly.
Tensor temporal_loss(const Tensor& z, const Tensor& prev, const std::optional<Tensor>& flow = std::nullopt);

// `<frame-id>_flow.btsr`
std::filesystem::path flow_file(const std::filesystem::path& dir, const std::string& frame_id);
// Reads a flow sidecar and checks it is [H,W,2] and finite. Returned as f32.
Tensor load_flow(const std::filesystem::path& path, std::size_t height, std::size_t width);

struct LossTerms {
  Tensor edge;
  Tensor hem;
  Tensor content;
  Tensor perceptual;
  Tensor temporal;
};

struct LossReport {
  double edge = 0, hem = 0, content = 0, perceptual = 0, temporal = 0;
  double composite = 0;  // content + lambda_percep * perceptual + lambda_temporal * temporal
  double total = 0;
};

// lambda_edge * edge + lambda_hem * hem + lambda_c * composite.
double weighted_total(double edge, double hem, double composite, const LossWeights& w);

// Combines scalar terms; undefined terms count as zero.
Tensor combine(const LossTerms& terms, const LossWeights& w, LossReport* report = nullptr);

struct FrameLossInputs {
  Tensor luminance;            // [H,W], L in [0,100]
  Tensor pred_ab;              // [H,W,2], network scaling
  Tensor target_ab;            // [H,W,2], network scaling
  Tensor prev_pred_ab;         // optional, prediction for the previous frame
  std::optional<Tensor> flow;  // optional, see temporal_loss
};

Tensor total_loss(const FrameLossInputs& in, const features::ExtractorWeights& extractor, const LossWeights& w,
                  LossReport* report = nullptr);

}  // namespace bistnet::loss
