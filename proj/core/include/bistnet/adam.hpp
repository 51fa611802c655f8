#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "bistnet/checkpoint.hpp"
#include "bistnet/tensor.hpp"

namespace bistnet {

struct AdamOptions {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Bias-corrected Adam over named parameters. Moments are kept in double.
class Adam {
 public:
  explicit Adam(AdamOptions options = {});

  const AdamOptions& options() const { return options_; }
  std::uint64_t step_count() const { return step_; }

  // Returns updated parameters; `grads` may omit names, which are then left
  // unchanged for this step.
  std::map<std::string, Tensor> step(const std::map<std::string, Tensor>& params,
                                     const std::map<std::string, Tensor>& grads);

  // State tensors are stored as adam.m.<name>, adam.v.<name> and adam.step.
  void store(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt);

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace bistnet
