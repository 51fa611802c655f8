#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "bistnet/checkpoint.hpp"
#include "bistnet/priors.hpp"
#include "bistnet/tensor.hpp"

// Three-level coarse-to-fine refinement: a UNet at 1/4 resolution sets the
// global color layout, and UNets at 1/2 and full resolution refine it, each
// seeing the upsampled prediction of the level below.
namespace bistnet::msrb {

struct MsrbConfig {
  std::size_t base_channels = 32;
  std::size_t unet_depth = 3;
  std::size_t c_seg = 19;
  bool share_level_weights = false;

  void validate() const;
};

// Channel order of the assembled input: [L, a, b, seg(c_seg), edge].
inline std::size_t input_channels(std::size_t c_seg) { return 4 + c_seg; }

class MsrbModel {
 public:
  // He-normal hidden convolutions, zero biases and an output head drawn at
  // 0.1 / sqrt(fan_in), so a fresh model starts close to its color prior.
  static MsrbModel initialize(const MsrbConfig& config, std::uint64_t seed, DType dtype = DType::f32);
  static MsrbModel zeros(const MsrbConfig& config, DType dtype = DType::f32);
  // Reads tensors named "msrb.*" and checks them against `config`.
  static MsrbModel from_checkpoint(const Checkpoint& ckpt, const MsrbConfig& config);

  void store(Checkpoint& ckpt) const;
  MsrbModel to(DType dtype) const;

  const MsrbConfig& config() const { return config_; }
  DType dtype() const;
  const std::map<std::string, Tensor>& parameters() const { return params_; }
  const Tensor& parameter(const std::string& name) const;
  // Replaces an existing parameter; the shape must not change.
  void set_parameter(const std::string& name, Tensor value);
  std::size_t parameter_count() const;

 private:
  MsrbModel(MsrbConfig config, std::map<std::string, Tensor> params);
  static std::map<std::string, Shape> layout(const MsrbConfig& config);

  MsrbConfig config_;
  std::map<std::string, Tensor> params_;
};

struct MsrbOutput {
  Tensor quarter;  // [H/4, W/4, 2]
  Tensor half;     // [H/2, W/2, 2]
  Tensor full;     // [H, W, 2]
};

// luminance: [H,W] in [0,100]; fused_ab: [H,W,2] in ab units. Output is in
// network scaling.
Tensor assemble_input(const Tensor& luminance, const Tensor& fused_ab, const priors::PriorMasks& masks);

// input: [H,W,4+c_seg] with H and W divisible by 4. Outputs are normalized ab,
// each the level's color prior (the ab channels of the resolution-matched
// input) plus a predicted residual, clamped to the valid ab range.
MsrbOutput forward(const MsrbModel& model, const Tensor& input);

}  // namespace bistnet::msrb
