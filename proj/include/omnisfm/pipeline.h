#pragma once

#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "omnisfm/config.h"
#include "omnisfm/match_graph.h"
#include "omnisfm/sfm_core.h"

namespace omnisfm {

// Unordered image pairs to keep; stored with the smaller id first.
using PairFilter = std::set<std::pair<ImageId, ImageId>>;

struct PipelineResult {
  std::vector<QuantizedPairMatches> pairs;
  std::vector<PairVerification> verification;
  std::vector<Track> tracks;
  int dropped_conflicts = 0;
  ReconstructionOutput output;
};

// Quantizes and verifies every pair, builds tracks from the verified
// inlier matches only, then reconstructs.
PipelineResult ReconstructFromMatches(const std::vector<ImageInfo>& images,
                                      const std::vector<PairMatches>& pairs,
                                      const Config& config, int threads,
                                      const std::optional<PairFilter>& filter = {});

// Derives one correspondence per track and image pair, verifies the pairs,
// then reconstructs over the given tracks.
PipelineResult ReconstructFromTracks(const std::vector<ImageInfo>& images,
                                     const std::vector<Track>& tracks,
                                     double grid_size, const Config& config,
                                     int threads,
                                     const std::optional<PairFilter>& filter = {});

}  // namespace omnisfm
