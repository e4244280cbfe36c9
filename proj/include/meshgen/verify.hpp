#pragma once

// Finite-difference suites over the full models at toy dimensions.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "meshgen/gradcheck.hpp"
#include "meshgen/seqgen.hpp"

namespace meshgen::verify {

inline constexpr double kGradTolerance = 1e-4;

struct SuiteResult {
  std::string suite;
  std::vector<BlockError> blocks;
  double max_error() const;
  bool passed(double tolerance = kGradTolerance) const { return max_error() < tolerance; }
};

// Embedding -> convolutions -> pooling -> dropout (fixed mask) -> dense ->
// sigmoid -> modified SCE loss on a 2-report batch.
SuiteResult gradcheck_textcnn(std::uint64_t seed);

// Teacher-forced sequence loss of one variant on a 2-image batch.
SuiteResult gradcheck_seqgen(seqgen::Variant variant, seqgen::Combine combine,
                             bool image_before_start, std::uint64_t seed);

// "all", "textcnn" or "seqgen" (ConfigError otherwise). Seqgen covers rnn0
// (both start conventions) and rnn1/rnn2 with both combine modes.
std::vector<SuiteResult> gradcheck_module(std::string_view module, std::uint64_t seed);

}  // namespace meshgen::verify
