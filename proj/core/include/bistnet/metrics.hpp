#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bistnet/tensor.hpp"

// Image quality metrics on RGB frames in [0,1]. All arithmetic is in double.
namespace bistnet::metrics {

// 10*log10(1/MSE) over every channel. Empty when the images are identical.
std::optional<double> psnr(const Tensor& pred, const Tensor& gt);

// Rec.601 luma of an [H,W,3] image -> [H,W] f64.
Tensor rgb_to_gray(const Tensor& rgb);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

// Mean local SSIM of two [H,W] images over the valid window positions.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& options = {});

enum class LogBase { e, two };

struct CdcOptions {
  std::size_t bins = 256;
  std::vector<std::size_t> strides{1, 2, 4};
  LogBase log_base = LogBase::e;
  std::size_t min_frames = 5;
};

// Mean over strides of the mean over frame pairs (t, t+s) of the per-channel
// Jensen-Shannon divergence between histograms, averaged over RGB.
double cdc(const std::vector<Tensor>& frames, const CdcOptions& options = {});

// Jensen-Shannon divergence of two normalized histograms.
double jensen_shannon(const std::vector<double>& p, const std::vector<double>& q, LogBase base = LogBase::e);

struct FrameScore {
  std::string id;
  std::optional<double> psnr;  // empty: identical
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<FrameScore> frames;
  std::optional<double> psnr_mean;  // over non-identical frames; empty if all identical
  double ssim_mean = 0.0;
  std::optional<double> cdc;        // empty when the clip is too short
  std::size_t identical_frames = 0;

  std::string to_json() const;
};

EvalReport evaluate(const std::vector<std::string>& ids, const std::vector<Tensor>& pred,
                    const std::vector<Tensor>& gt, const CdcOptions& cdc_options = {});

}  // namespace bistnet::metrics
