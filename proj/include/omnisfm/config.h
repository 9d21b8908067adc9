#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "omnisfm/sfm_core.h"
#include "omnisfm/two_view.h"

namespace omnisfm {

// Pipeline settings loaded from `key = value` text.
struct Config {
  double grid_size = 4.0;
  RansacOptions ransac;
  SfmOptions sfm;
  uint64_t seed = 0;

  // Propagates `seed` into the RANSAC and reconstruction options.
  void SetSeed(uint64_t value);
};

// Unknown keys, malformed values and out-of-range values raise ParseError.
Config ParseConfig(std::istream& in, const std::string& source);
Config LoadConfig(const std::string& path);

// Every key with its current value, one `key = value` per line.
std::string FormatConfig(const Config& config);

}  // namespace omnisfm
