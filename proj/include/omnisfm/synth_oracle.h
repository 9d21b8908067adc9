#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include <Eigen/Core>

#include "omnisfm/match_graph.h"
#include "omnisfm/sphere_geom.h"

namespace omnisfm {

// Axis-aligned room centered at the origin; y is up.
struct RoomDims {
  double width = 8.0;   // x extent
  double depth = 6.0;   // z extent
  double height = 3.0;  // y extent

  Eigen::Vector3d HalfExtents() const {
    return 0.5 * Eigen::Vector3d(width, height, depth);
  }
  double Diameter() const { return 2.0 * HalfExtents().norm(); }
};

struct SceneSpec {
  int n_cams = 20;
  int n_points = 1000;
  RoomDims room;
  uint64_t seed = 42;
  // Cameras are drawn uniformly from the room shrunk by this fraction of
  // each extent on every side.
  double camera_inset = 0.1;
};

struct GroundTruthScene {
  std::vector<Pose> poses;
  std::vector<Eigen::Vector3d> points;
  std::vector<std::set<int>> visibility;  // cameras seeing each point
  RoomDims room;
  uint64_t seed = 0;
};

// Cameras uniformly inside the (inset) box with uniformly random
// orientations; points uniformly on the six box faces (area weighted). The
// room is convex and the cameras are omnidirectional, so every camera sees
// every point. Throws DomainError on degenerate input.
GroundTruthScene GenerateScene(const SceneSpec& spec);

struct ObserveOptions {
  ErpDims dims{640, 320};
  double noise_sigma = 0.0;   // pixels
  double outlier_frac = 0.0;  // per pair, count = floor(frac * n)
  // Seed for noise and outliers; the scene seed is used when unset.
  int64_t seed = -1;
};

struct SyntheticMatches {
  std::vector<PairMatches> pairs;
  // Per pair and correspondence: index of the true point, or -1 for an
  // injected outlier.
  std::vector<std::vector<int>> labels;
  // Noisy ERP observation of every (camera, point); the same coordinate is
  // used in every pair that includes that view.
  std::vector<std::vector<ErpPoint>> observations;
};

// Pairs (i, j), i < j, in lexicographic order; one correspondence per shared
// point in point order. Gaussian pixel noise is drawn once per (camera,
// point). Outliers replace both endpoints with uniform random pixels and get
// confidence < 1; inliers have confidence 1.
SyntheticMatches Observe(const GroundTruthScene& scene,
                         const ObserveOptions& options);

// Composes every pose except the first with a random rotation of angle
// |N(0, rot_sigma)| about a uniform axis, and moves its center by
// trans_frac * room diameter in a uniform direction.
std::vector<Pose> PerturbPoses(const GroundTruthScene& scene,
                               double rot_sigma_deg, double trans_frac,
                               uint64_t seed);

}  // namespace omnisfm
