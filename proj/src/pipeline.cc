#include "omnisfm/pipeline.h"

#include <algorithm>
#include <map>

namespace omnisfm {

namespace {

bool Allowed(const std::optional<PairFilter>& filter, ImageId a, ImageId b) {
  return !filter || filter->count({std::min(a, b), std::max(a, b)}) > 0;
}

void VerifyAndReconstruct(const std::vector<ImageInfo>& images, const Config& config,
                          int threads, PipelineResult* result) {
  result->verification = VerifyPairs(images, result->pairs, config.ransac, threads);
  std::vector<VerifiedPair> verified;
  for (const PairVerification& v : result->verification) {
    if (v.verified) {
      verified.push_back(*v.verified);
    }
  }
  result->output = Reconstruct(images, verified, result->tracks, config.sfm);
}

}  // namespace

PipelineResult ReconstructFromMatches(const std::vector<ImageInfo>& images,
                                      const std::vector<PairMatches>& pairs,
                                      const Config& config, int threads,
                                      const std::optional<PairFilter>& filter) {
  PipelineResult result;
  for (const PairMatches& pm : pairs) {
    if (Allowed(filter, pm.image_a, pm.image_b)) {
      result.pairs.push_back(QuantizeMatches(pm, config.grid_size));
    }
  }
  result.verification = VerifyPairs(images, result.pairs, config.ransac, threads);
  std::vector<QuantizedPairMatches> inlier_pairs;
  std::vector<VerifiedPair> verified;
  for (size_t i = 0; i < result.pairs.size(); ++i) {
    const PairVerification& v = result.verification[i];
    if (v.verified) {
      inlier_pairs.push_back(InlierMatches(result.pairs[i], *v.verified));
      verified.push_back(*v.verified);
    }
  }
  TrackBuildResult built = BuildTracks(inlier_pairs);
  result.tracks = std::move(built.tracks);
  result.dropped_conflicts = built.dropped_conflicts;
  result.output = Reconstruct(images, verified, result.tracks, config.sfm);
  return result;
}

PipelineResult ReconstructFromTracks(const std::vector<ImageInfo>& images,
                                     const std::vector<Track>& tracks,
                                     double grid_size, const Config& config,
                                     int threads,
                                     const std::optional<PairFilter>& filter) {
  PipelineResult result;
  result.tracks = tracks;
  std::map<std::pair<ImageId, ImageId>, QuantizedPairMatches> by_pair;
  for (const Track& track : tracks) {
    for (auto a = track.observations.begin(); a != track.observations.end(); ++a) {
      for (auto b = std::next(a); b != track.observations.end(); ++b) {
        if (!Allowed(filter, a->first, b->first)) {
          continue;
        }
        QuantizedPairMatches& pm = by_pair[{a->first, b->first}];
        pm.image_a = a->first;
        pm.image_b = b->first;
        pm.grid_size = grid_size;
        pm.matches.push_back({a->second.cell, b->second.cell,
                              Correspondence{a->second.coord, b->second.coord, 1.0}});
      }
    }
  }
  for (auto& [key, pm] : by_pair) {
    result.pairs.push_back(std::move(pm));
  }
  VerifyAndReconstruct(images, config, threads, &result);
  return result;
}

}  // namespace omnisfm
