#pragma once

#include <filesystem>
#include <vector>

#include "bistnet/tensor.hpp"

namespace bistnet::io {

// Any PNG libpng understands, converted to 8-bit RGB and returned as [H,W,3]
// f32 in [0,1]. Grayscale inputs replicate into all three channels.
Tensor read_png(const std::filesystem::path& path);

// [H,W,3] in [0,1], written as 8-bit RGB after rounding and clamping.
void write_png(const std::filesystem::path& path, const Tensor& rgb);

// Regular files with a .png extension, sorted by filename.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

}  // namespace bistnet::io
