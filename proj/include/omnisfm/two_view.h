#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "omnisfm/sphere_geom.h"

namespace omnisfm {

// Epipolar convention used throughout: poses are world-to-camera and the
// relative motion is x2 = R x1 + t, so u2^T [t]_x R u1 = 0 for a
// noiseless correspondence (u1 in camera 1, u2 in camera 2).
struct BearingPair {
  Eigen::Vector3d u1;
  Eigen::Vector3d u2;
};

// Frobenius norm 1; rank 2 with equal nonzero singular values once
// projected onto the essential manifold.
struct EssentialMatrix {
  Eigen::Matrix3d e = Eigen::Matrix3d::Zero();
};

struct EssentialEstimate {
  EssentialMatrix essential;
  // Smallest two singular values of the design matrix nearly equal
  // (ratio > 0.99): the null space is not one-dimensional.
  bool ambiguous = false;
  double singular_ratio = 0.0;
};

struct RelativeMotion {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

// Normalized 8-point DLT on bearing vectors. Each side is whitened by the
// inverse square root of its second-moment matrix before the n x 9 design
// matrix of Kronecker rows (u2 kron u1) is solved via SVD. Throws
// InsufficientDataError for fewer than 8 pairs.
EssentialEstimate EstimateEssential8pt(std::span<const BearingPair> pairs);

// Replace singular values with (s, s, 0), s the mean of the two largest,
// and scale to unit Frobenius norm.
Eigen::Matrix3d ProjectToEssentialManifold(const Eigen::Matrix3d& e);

// Mean angular distance of each bearing to the epipolar great circle
// induced by the other one. Zero iff u2^T E u1 = 0. Invariant to the
// scale of E. When an epipolar-plane normal vanishes (bearing on the
// epipole axis) the residual is 0 and `on_epipole` is set.
double EpipolarResidual(const Eigen::Matrix3d& e, const Eigen::Vector3d& u1,
                        const Eigen::Vector3d& u2, bool* on_epipole = nullptr);

// The four (R, t) factorizations of E = [t]_x R, t unit.
std::array<RelativeMotion, 4> EssentialCandidates(const Eigen::Matrix3d& e);

// Two-ray midpoint triangulation in camera-1 coordinates. Returns the ray
// parameters (lambda1, lambda2) of the closest points, or nullopt when the
// rays are parallel.
std::optional<Eigen::Vector2d> MidpointDepths(const RelativeMotion& motion,
                                              const Eigen::Vector3d& u1,
                                              const Eigen::Vector3d& u2);
Eigen::Vector3d MidpointPoint(const RelativeMotion& motion,
                              const Eigen::Vector3d& u1,
                              const Eigen::Vector3d& u2,
                              const Eigen::Vector2d& depths);

// Number of pairs triangulating in front of both cameras.
int CountPositiveDepth(const RelativeMotion& motion,
                       std::span<const BearingPair> pairs);

// Picks the candidate with a strict majority of positive-depth votes.
// Throws CheiralityAmbiguousError otherwise.
RelativeMotion DecomposeEssential(const Eigen::Matrix3d& e,
                                  std::span<const BearingPair> inliers);

struct RansacOptions {
  double threshold = 0.01;  // radians
  int max_iters = 10000;
  double confidence = 0.9999;
  int min_inliers = 15;
  int max_local_steps = 4;
  uint64_t seed = 0;

  void Check() const;
};

struct TwoViewGeometry {
  EssentialMatrix essential;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::UnitX();
  std::vector<bool> inlier_mask;
  std::vector<double> residuals;
  int num_inliers = 0;
  int iterations = 0;
};

enum class TwoViewStatus { kVerified, kTooFewInliers, kCheiralityAmbiguous };
std::string ToString(TwoViewStatus status);

struct TwoViewResult {
  TwoViewStatus status = TwoViewStatus::kTooFewInliers;
  TwoViewGeometry geometry;
  bool ok() const { return status == TwoViewStatus::kVerified; }
};

// Locally optimized RANSAC over 8-point hypotheses. Hypotheses are ranked by
// (inlier count, lower inlier residual sum, lower hypothesis index); the
// winner is re-estimated on all its inliers and decomposed. Throws
// InsufficientDataError for fewer than 8 pairs.
TwoViewResult RansacTwoView(std::span<const BearingPair> pairs,
                            const RansacOptions& options);

// Adaptive RANSAC trial count for inlier ratio `w` and sample size `k`.
int RequiredIterations(double inlier_ratio, int sample_size,
                       double confidence, int max_iters);

}  // namespace omnisfm
