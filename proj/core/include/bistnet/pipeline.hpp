#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bistnet/btfb.hpp"
#include "bistnet/colorspace.hpp"
#include "bistnet/config.hpp"
#include "bistnet/features.hpp"
#include "bistnet/losses.hpp"
#include "bistnet/metrics.hpp"
#include "bistnet/msrb.hpp"

namespace bistnet::pipeline {

// Frame size used when RunConfig::resize_standard is set.
inline constexpr std::size_t kStandardWidth = 384;
inline constexpr std::size_t kStandardHeight = 224;

struct Clip {
  std::vector<Tensor> frames;  // [H,W] luminance in [0,100]
  std::vector<std::string> ids;
  color::LabImage ref_f;
  std::optional<color::LabImage> ref_b;  // empty: single-reference mode
  std::string ref_f_id, ref_b_id;

  std::size_t size() const { return frames.size(); }
  std::size_t height() const { return frames.front().dim(0); }
  std::size_t width() const { return frames.front().dim(1); }
  void validate() const;
};

// Frames are the PNGs of `frames_dir` in filename order; color frames reduce to
// their luminance. Omitting `ref_last` selects single-reference mode.
Clip load_clip(const std::filesystem::path& frames_dir, const std::filesystem::path& ref_first,
               const std::optional<std::filesystem::path>& ref_last, bool resize_standard = false);

// In-memory variant; frames and references are [H,W,3] RGB in [0,1].
Clip make_clip(const std::vector<Tensor>& rgb_frames, const std::vector<std::string>& ids, const Tensor& ref_first,
               const std::optional<Tensor>& ref_last);

struct Model {
  features::ExtractorWeights extractor;
  msrb::MsrbModel msrb;
};

Model initialize_model(const RunConfig& config);
// Every MSRB parameter zero; the output reproduces the fused color prior.
Model zero_model(const RunConfig& config);
// Extractor tensors missing from the checkpoint are regenerated from extractor_seed.
Model load_model(const std::filesystem::path& ckpt_dir, const RunConfig& config);
void store_model(const Model& model, Checkpoint& ckpt);

struct ColorizeOptions {
  std::optional<std::filesystem::path> priors_dir;
  std::optional<std::filesystem::path> features_dir;
  // Reuse reference features across frames. Turning it off recomputes them
  // per frame with identical results.
  bool cache_reference_features = true;
};

struct FrameResult {
  std::size_t index = 0;
  std::string id;
  Tensor ab;   // [H,W,2] predicted chrominance
  Tensor rgb;  // [H,W,3] in [0,1]
  Tensor w_f, w_b, p;  // warps and fused prior, [H,W,2]; w_b undefined in single-reference mode
  btfb::FusionWeights weights;
  priors::PriorMasks masks;
};

std::vector<FrameResult> colorize_clip(const Clip& clip, const Model& model, const RunConfig& config,
                                       const ColorizeOptions& options = {});

// Writes `<id>.png` for every result.
void write_frames(const std::filesystem::path& out_dir, const std::vector<FrameResult>& results);

struct TrainingClip {
  std::string name;
  std::vector<std::string> ids;
  std::vector<Tensor> luminance;  // [H,W]
  std::vector<Tensor> target_ab;  // [H,W,2], network scaling
  std::vector<Tensor> inputs;     // assembled MSRB inputs
  std::vector<std::optional<Tensor>> flows;  // flow for frame t relative to frame t-1
};

// Ground-truth RGB frames; the first and last act as references. H and W must
// be multiples of 4.
TrainingClip prepare_training_clip(const std::string& name, const std::vector<Tensor>& rgb_frames,
                                   const std::vector<std::string>& ids, const Model& model, const RunConfig& config,
                                   const std::optional<std::filesystem::path>& priors_dir = std::nullopt,
                                   const std::optional<std::filesystem::path>& flow_dir = std::nullopt);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  loss::LossReport report;  // averaged over the frames of the step
};

struct TrainOptions {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(std::size_t epoch, const Model&, const Adam&)> on_epoch;
};

struct TrainResult {
  Model model;
  std::vector<StepRecord> history;
};

// Each step is one run of up to batch_size consecutive frames of a clip; an
// epoch visits every run of every clip in order. A non-finite loss throws
// NumericError naming the step.
TrainResult train_model(const std::vector<TrainingClip>& clips, Model model, const RunConfig& config,
                        const TrainOptions& options = {});

// data_root holds clip directories with gt/*.png and optional priors/ and
// flow/; a directory that itself has gt/ is a single clip. Writes
// out_dir/loss.csv and out_dir/checkpoint after every epoch.
TrainResult train(const std::filesystem::path& data_root, const std::filesystem::path& out_dir,
                  const RunConfig& config);

// Frames are paired by filename; both directories must hold the same set.
metrics::EvalReport evaluate(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                             const metrics::CdcOptions& cdc = {});

}  // namespace bistnet::pipeline
