#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "bistnet/tensor.hpp"

namespace testutil {

inline bistnet::Tensor random_tensor(bistnet::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                                     bistnet::DType dtype = bistnet::DType::f64) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(bistnet::numel(shape));
  for (double& x : v) x = d(rng);
  return bistnet::Tensor::from_values(shape, v, dtype);
}

inline double max_abs_diff(const bistnet::Tensor& a, const bistnet::Tensor& b) {
  const auto x = a.to_vector(), y = b.to_vector();
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("bistnet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
