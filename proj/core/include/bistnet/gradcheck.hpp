#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bistnet::gradcheck {

struct CaseResult {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  double eps = 1e-6;
  double tolerance = 1e-4;
  std::size_t size = 8;  // spatial extent of the random test images
};

// Central-difference checks at f64 for every primitive op, every loss term,
// the weighted total and the refinement network followed by the total loss.
std::vector<CaseResult> run_suite(const SuiteOptions& options = {});

}  // namespace bistnet::gradcheck
