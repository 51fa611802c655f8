#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "bistnet/adam.hpp"
#include "bistnet/correspondence.hpp"
#include "bistnet/losses.hpp"
#include "bistnet/metrics.hpp"
#include "bistnet/msrb.hpp"

namespace bistnet {

struct RunConfig {
  corr::CorrespondenceOptions correspondence;
  bool btfb_equation_literal = false;
  msrb::MsrbConfig msrb;  // msrb.c_seg doubles as the segmentation channel count
  loss::LossWeights loss;
  AdamOptions adam;
  metrics::CdcOptions cdc;
  std::uint64_t seed = 0;
  std::uint64_t extractor_seed = 7;
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  bool deterministic = true;
  // Resize every frame to 384x224 (width x height) on load.
  bool resize_standard = false;
  // Inclusive frame index range to colorize; empty means the whole clip.
  std::optional<std::size_t> frame_begin, frame_end;

  void validate() const;
};

// Flat `key = value` text; `#` starts a comment; blank lines are ignored.
// Unknown keys and malformed values are ConfigErrors naming the line.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Canonical text for `config`; parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& config);

}  // namespace bistnet
