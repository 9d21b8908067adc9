#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "omnisfm/sphere_geom.h"

namespace omnisfm {

struct PoseBlock {
  Pose pose;
  bool fix_rotation = false;
  bool fix_translation = false;
  // Holds one translation component constant (0, 1 or 2; -1 for none).
  // Used to pin the scale gauge while the rest of the pose stays free.
  int pinned_translation_axis = -1;

  bool FullyFixed() const { return fix_rotation && fix_translation; }
};

struct PointBlock {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  bool fixed = false;
};

struct ResidualBlock {
  int pose = -1;
  int point = -1;
  Eigen::Vector3d observed = Eigen::Vector3d::UnitZ();  // unit bearing
};

// Spherical reprojection objective: sum over blocks of
// rho(|normalize(R X + t) - u|^2), with rho the scaled soft-L1 when
// `robustify` is set and the identity otherwise.
struct BAProblem {
  std::vector<PoseBlock> poses;
  std::vector<PointBlock> points;
  std::vector<ResidualBlock> residuals;
  bool robustify = false;
  double robust_scale = 0.02;

  // Throws DomainError on dangling references or a missing gauge pose.
  void Check() const;
};

// Chord residual normalize(R X + t) - u_obs. Throws
// ProjectionUndefinedError when X is at the camera center.
Eigen::Vector3d Residual(const Pose& pose, const Eigen::Vector3d& point,
                         const Eigen::Vector3d& u_obs);

// Jacobians of Residual with respect to a left rotation increment
// (R <- Exp(w) R), the translation, and the point.
struct ResidualJacobians {
  Eigen::Matrix3d rotation;
  Eigen::Matrix3d translation;
  Eigen::Matrix3d point;
};
Eigen::Vector3d ResidualWithJacobians(const Pose& pose,
                                      const Eigen::Vector3d& point,
                                      const Eigen::Vector3d& u_obs,
                                      ResidualJacobians* jacobians);

// rho(s) = 2 (sqrt(1 + s) - 1).
double SoftL1(double s);
// Scaled form c^2 rho(s / c^2) and its derivative in s.
double ScaledSoftL1(double s, double scale);
double ScaledSoftL1Derivative(double s, double scale);

// Per-block cost as it enters the objective.
double BlockCost(const BAProblem& problem, const ResidualBlock& block);
double TotalCost(const BAProblem& problem);

struct BAOptions {
  int max_iters = 100;
  double f_tol = 1e-10;
  double g_tol = 1e-10;
  double initial_lambda = 1e-4;
  int max_damping_escalations = 10;
};

enum class BATermination {
  kFunctionTolerance,
  kGradientTolerance,
  kMaxIterations,
  kStalled,
  kNoResiduals,
};
std::string ToString(BATermination termination);

struct BAReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int accepted_steps = 0;
  // Cost at the start and after every accepted step.
  std::vector<double> cost_history;
  BATermination termination = BATermination::kMaxIterations;
  bool stalled = false;
  // Residual blocks skipped at least once because the point sat on the
  // camera center.
  int deactivated_blocks = 0;
};

// Levenberg-Marquardt with Schur elimination of the point blocks.
// Rotations are updated on SO(3) and re-orthonormalized on every accepted
// step; fixed blocks are never written. Throws DomainError if the starting
// cost is not finite.
BAReport Optimize(BAProblem* problem, const BAOptions& options = {});

}  // namespace omnisfm
