#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "bistnet/tensor.hpp"

namespace bistnet {

// Named tensors persisted as a directory: one BTSR file per entry plus
// `manifest.txt` holding one "name shape dtype file" line each (shape as
// AxBxC, "scalar" for rank 0).
class Checkpoint {
 public:
  void set(const std::string& name, Tensor tensor);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  void save(const std::filesystem::path& dir) const;
  static Checkpoint load(const std::filesystem::path& dir);

 private:
  std::map<std::string, Tensor> tensors_;
};

}  // namespace bistnet
