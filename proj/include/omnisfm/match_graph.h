#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "omnisfm/sphere_geom.h"

namespace omnisfm {

using ImageId = int32_t;
using TrackId = int32_t;

struct Correspondence {
  ErpPoint px_a;
  ErpPoint px_b;
  double confidence = 1.0;
};

struct PairMatches {
  ImageId image_a = -1;
  ImageId image_b = -1;
  std::vector<Correspondence> matches;
};

// Integer grid coordinates of a quantized location: the quantized
// coordinate is (col * r, row * r).
struct GridCell {
  int64_t col = 0;
  int64_t row = 0;
  auto operator<=>(const GridCell&) const = default;
};

struct KeypointId {
  ImageId image = -1;
  GridCell cell;
  auto operator<=>(const KeypointId&) const = default;
};

struct QuantizedMatch {
  GridCell cell_a;
  GridCell cell_b;
  // Highest-confidence input correspondence that fell into this cell pair.
  Correspondence source;
};

struct QuantizedPairMatches {
  ImageId image_a = -1;
  ImageId image_b = -1;
  double grid_size = 0.0;
  std::vector<QuantizedMatch> matches;
};

struct TrackObservation {
  GridCell cell;
  // Continuous coordinate of the first match that introduced this keypoint.
  ErpPoint coord;
};

struct Track {
  std::map<ImageId, TrackObservation> observations;
  size_t size() const { return observations.size(); }
};

struct TrackBuildResult {
  std::vector<Track> tracks;
  // Matches whose union would have put two cells of one image in a track.
  int dropped_conflicts = 0;
  int used_matches = 0;
};

// Round x / r to the nearest integer (half away from zero) and scale back.
double Quantize(double x, double grid_size);
GridCell QuantizeCell(const ErpPoint& px, double grid_size);

// Quantizes both endpoints and merges correspondences that collapse onto
// the same (cell_a, cell_b) pair, keeping the highest-confidence member
// (first one on ties). Output order follows first occurrence.
QuantizedPairMatches QuantizeMatches(const PairMatches& pm, double grid_size);

// Union-find over keypoints. Pairs are processed in lexicographic
// (min image, max image) order and matches in input order; a union that
// would place two distinct cells of the same image in one track is skipped
// and counted in `dropped_conflicts`. Tracks are ordered by their smallest
// keypoint.
TrackBuildResult BuildTracks(const std::vector<QuantizedPairMatches>& pairs);

}  // namespace omnisfm
