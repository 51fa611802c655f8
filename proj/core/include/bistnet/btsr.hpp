#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "bistnet/tensor.hpp"

// Portable tensor file: "BTSR" magic, u32 LE version (1), u8 dtype (1=f32, 2=f64),
// u8 ndim, ndim x u64 LE dims, then the row-major IEEE-754 LE payload.
namespace bistnet::btsr {

inline constexpr std::uint32_t kVersion = 1;

std::vector<std::uint8_t> encode(const Tensor& tensor);
// `source` only decorates error messages.
Tensor decode(std::span<const std::uint8_t> bytes, std::string_view source = "<memory>");

void write(const std::filesystem::path& path, const Tensor& tensor);
Tensor read(const std::filesystem::path& path);

}  // namespace bistnet::btsr
