#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "omnisfm/sphere_geom.h"

namespace omnisfm {

struct BearingPointPair {
  Eigen::Vector3d bearing;  // unit, camera frame
  Eigen::Vector3d point;    // world frame
};

// Grunert's three-point solution. Uses only the inter-ray angles, so it is
// valid for any central camera including the full sphere. Returns up to four
// world-to-camera poses.
std::vector<Pose> SolveP3P(std::span<const BearingPointPair, 3> sample);

// Rigid transform with dst_i ~ R src_i + t (least squares, Kabsch).
Pose AlignPoints(std::span<const Eigen::Vector3d> src,
                 std::span<const Eigen::Vector3d> dst);

// Two-component tangent residual whose norm is the angle between the
// observed bearing and the projected point.
Eigen::Vector2d TangentAngularResidual(const Pose& pose,
                                       const BearingPointPair& obs);

struct PoseRefineOptions {
  int max_iters = 50;
  double f_tol = 1e-14;
};

// Levenberg-Marquardt on sum of squared angular residuals; rotation is
// updated by left-composed tangent increments.
Pose RefinePoseAngular(const Pose& initial,
                       std::span<const BearingPointPair> observations,
                       const PoseRefineOptions& options = {});

struct ResectionOptions {
  double threshold = 0.02;  // radians
  int max_iters = 10000;
  double confidence = 0.9999;
  int min_inliers = 12;
  uint64_t seed = 0;

  void Check() const;
};

struct ResectionResult {
  bool success = false;
  Pose pose;
  std::vector<bool> inlier_mask;
  int num_inliers = 0;
  int iterations = 0;
};

// RANSAC over P3P hypotheses (4-point samples: 3 to solve, 1 to reject
// spurious roots), then angular LM refinement on the inliers. Throws
// InsufficientDataError for fewer than 4 correspondences.
ResectionResult EstimateAbsolutePose(std::span<const BearingPointPair> corrs,
                                     const ResectionOptions& options);

}  // namespace omnisfm
