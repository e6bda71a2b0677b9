#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "lungdet/formats.hpp"
#include "lungdet/metrics.hpp"

namespace lungdet::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kIoError = 1, kBadInput = 2 };

/// Parse `lo:hi:step` or a comma-separated list of thresholds.
ThresholdSet parse_thresholds(const std::string& spec);

/// Parse `WxH`.
std::pair<std::size_t, std::size_t> parse_dims(const std::string& spec);

/// Score every image on `workers` threads; results are in input order
/// regardless of worker count.
std::vector<ImageScore> score_images(const std::vector<ImageRecord>& images,
                                     const ThresholdSet& thresholds, HitRule rule,
                                     std::size_t workers);

/// Entry point. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lungdet::cli
