#include "omnisfm/bundle_adjust.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "omnisfm/error.h"

namespace omnisfm {

void BAProblem::Check() const {
  bool has_gauge = false;
  for (const PoseBlock& p : poses) {
    has_gauge = has_gauge || p.FullyFixed();
    if (p.pinned_translation_axis < -1 || p.pinned_translation_axis > 2) {
      throw DomainError("pinned translation axis out of range");
    }
  }
  if (!has_gauge) {
    throw DomainError("bundle adjustment needs at least one fully fixed pose");
  }
  for (const ResidualBlock& r : residuals) {
    if (r.pose < 0 || r.pose >= static_cast<int>(poses.size()) ||
        r.point < 0 || r.point >= static_cast<int>(points.size())) {
      throw DomainError("residual block references a missing pose or point");
    }
  }
  if (robustify && !(robust_scale > 0.0)) {
    throw DomainError("robust scale must be positive");
  }
}

Eigen::Vector3d ResidualWithJacobians(const Pose& pose,
                                      const Eigen::Vector3d& point,
                                      const Eigen::Vector3d& u_obs,
                                      ResidualJacobians* jacobians) {
  const Eigen::Vector3d rotated = pose.rotation * point;
  const Eigen::Vector3d p = rotated + pose.translation;
  const double norm = p.norm();
  if (!(norm > kCenterEpsilon)) {
    throw ProjectionUndefinedError("point coincides with the camera center");
  }
  const Eigen::Vector3d q = p / norm;
  if (jacobians != nullptr) {
    const Eigen::Matrix3d dq_dp =
        (Eigen::Matrix3d::Identity() - q * q.transpose()) / norm;
    jacobians->rotation = -dq_dp * SkewSymmetric(rotated);
    jacobians->translation = dq_dp;
    jacobians->point = dq_dp * pose.rotation;
  }
  return q - u_obs;
}

Eigen::Vector3d Residual(const Pose& pose, const Eigen::Vector3d& point,
                         const Eigen::Vector3d& u_obs) {
  return ResidualWithJacobians(pose, point, u_obs, nullptr);
}

double SoftL1(double s) { return 2.0 * (std::sqrt(1.0 + s) - 1.0); }

double ScaledSoftL1(double s, double scale) {
  const double c2 = scale * scale;
  return c2 * SoftL1(s / c2);
}

double ScaledSoftL1Derivative(double s, double scale) {
  return 1.0 / std::sqrt(1.0 + s / (scale * scale));
}

double BlockCost(const BAProblem& problem, const ResidualBlock& block) {
  const double s = Residual(problem.poses[block.pose].pose,
                            problem.points[block.point].position,
                            block.observed)
                       .squaredNorm();
  return problem.robustify ? ScaledSoftL1(s, problem.robust_scale) : s;
}

namespace {

// Sums in block order so the cost is reproducible.
double EvaluateCost(const BAProblem& problem, int* deactivated) {
  double cost = 0.0;
  for (const ResidualBlock& block : problem.residuals) {
    try {
      cost += BlockCost(problem, block);
    } catch (const ProjectionUndefinedError&) {
      if (deactivated != nullptr) {
        ++*deactivated;
      }
    }
  }
  return cost;
}

struct ParameterLayout {
  // Global column of each local pose parameter (rotation 0..2, translation
  // 3..5), -1 when held constant.
  std::vector<std::array<int, 6>> pose_columns;
  int num_pose_params = 0;
  std::vector<std::vector<int>> point_blocks;  // residual blocks per point

  explicit ParameterLayout(const BAProblem& problem) {
    pose_columns.resize(problem.poses.size());
    for (size_t i = 0; i < problem.poses.size(); ++i) {
      const PoseBlock& p = problem.poses[i];
      for (int k = 0; k < 6; ++k) {
        const bool fixed = k < 3 ? p.fix_rotation
                                 : (p.fix_translation ||
                                    p.pinned_translation_axis == k - 3);
        pose_columns[i][k] = fixed ? -1 : num_pose_params++;
      }
    }
    point_blocks.resize(problem.points.size());
    for (size_t r = 0; r < problem.residuals.size(); ++r) {
      point_blocks[problem.residuals[r].point].push_back(static_cast<int>(r));
    }
  }
};

struct Linearization {
  Eigen::MatrixXd hpp;
  Eigen::VectorXd gp;
  std::vector<Eigen::Matrix3d> hll;
  std::vector<Eigen::Vector3d> gl;
  // Pose-point coupling per residual block, full 6 local pose params.
  std::vector<Eigen::Matrix<double, 6, 3>> hpl;
  std::vector<bool> active;
  double max_gradient = 0.0;
};

Linearization Linearize(const BAProblem& problem, const ParameterLayout& layout) {
  Linearization lin;
  const int np = layout.num_pose_params;
  lin.hpp = Eigen::MatrixXd::Zero(np, np);
  lin.gp = Eigen::VectorXd::Zero(np);
  lin.hll.assign(problem.points.size(), Eigen::Matrix3d::Zero());
  lin.gl.assign(problem.points.size(), Eigen::Vector3d::Zero());
  lin.hpl.assign(problem.residuals.size(), Eigen::Matrix<double, 6, 3>::Zero());
  lin.active.assign(problem.residuals.size(), false);

  for (size_t r = 0; r < problem.residuals.size(); ++r) {
    const ResidualBlock& block = problem.residuals[r];
    const PoseBlock& pose = problem.poses[block.pose];
    const PointBlock& point = problem.points[block.point];
    ResidualJacobians jac;
    Eigen::Vector3d res;
    try {
      res = ResidualWithJacobians(pose.pose, point.position, block.observed, &jac);
    } catch (const ProjectionUndefinedError&) {
      continue;
    }
    lin.active[r] = true;
    // Iteratively reweighted form of the robust loss: scale the residual
    // and Jacobian by sqrt(rho'(s)).
    double weight = 1.0;
    if (problem.robustify) {
      weight = ScaledSoftL1Derivative(res.squaredNorm(), problem.robust_scale);
    }
    Eigen::Matrix<double, 3, 6> jp;
    jp << jac.rotation, jac.translation;
    const Eigen::Matrix<double, 6, 3> jpt_w = weight * jp.transpose();
    const Eigen::Matrix<double, 6, 6> hpp_local = jpt_w * jp;
    const Eigen::Matrix<double, 6, 1> gp_local = jpt_w * res;
    const std::array<int, 6>& cols = layout.pose_columns[block.pose];
    for (int a = 0; a < 6; ++a) {
      if (cols[a] < 0) {
        continue;
      }
      lin.gp[cols[a]] += gp_local[a];
      for (int b = 0; b < 6; ++b) {
        if (cols[b] >= 0) {
          lin.hpp(cols[a], cols[b]) += hpp_local(a, b);
        }
      }
    }
    if (!point.fixed) {
      const Eigen::Matrix3d jx = jac.point;
      lin.hll[block.point] += weight * jx.transpose() * jx;
      lin.gl[block.point] += weight * jx.transpose() * res;
      lin.hpl[r] = jpt_w * jx;
    }
  }
  double max_gradient = lin.gp.size() > 0 ? lin.gp.lpNorm<Eigen::Infinity>() : 0.0;
  for (size_t j = 0; j < problem.points.size(); ++j) {
    if (!problem.points[j].fixed) {
      max_gradient = std::max(max_gradient, lin.gl[j].lpNorm<Eigen::Infinity>());
    }
  }
  // Gradient of sum rho is 2 J^T W r.
  lin.max_gradient = 2.0 * max_gradient;
  return lin;
}

double Damped(double diagonal, double lambda) {
  return diagonal + lambda * std::max(diagonal, 1e-12);
}

// Solves the damped normal equations by eliminating the point blocks.
// Returns false if the reduced system is not positive definite.
bool SolveStep(const BAProblem& problem, const ParameterLayout& layout,
               const Linearization& lin, double lambda,
               Eigen::VectorXd* pose_step,
               std::vector<Eigen::Vector3d>* point_steps) {
  const int np = layout.num_pose_params;
  Eigen::MatrixXd s = lin.hpp;
  Eigen::VectorXd b = -lin.gp;
  for (int i = 0; i < np; ++i) {
    s(i, i) = Damped(lin.hpp(i, i), lambda);
  }
  std::vector<Eigen::Matrix3d> hll_inv(problem.points.size(),
                                       Eigen::Matrix3d::Zero());
  for (size_t j = 0; j < problem.points.size(); ++j) {
    if (problem.points[j].fixed || layout.point_blocks[j].empty()) {
      continue;
    }
    Eigen::Matrix3d hll = lin.hll[j];
    for (int k = 0; k < 3; ++k) {
      hll(k, k) = Damped(hll(k, k), lambda);
    }
    const Eigen::LDLT<Eigen::Matrix3d> ldlt(hll);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      return false;
    }
    hll_inv[j] = ldlt.solve(Eigen::Matrix3d::Identity());
    const std::vector<int>& blocks = layout.point_blocks[j];
    const Eigen::Vector3d hinv_g = hll_inv[j] * lin.gl[j];
    for (const int ra : blocks) {
      if (!lin.active[ra]) {
        continue;
      }
      const std::array<int, 6>& cols_a =
          layout.pose_columns[problem.residuals[ra].pose];
      const Eigen::Matrix<double, 6, 3> w_a = lin.hpl[ra] * hll_inv[j];
      // b_p += Hpl Hll^-1 g_l
      const Eigen::Matrix<double, 6, 1> bb = lin.hpl[ra] * hinv_g;
      for (int a = 0; a < 6; ++a) {
        if (cols_a[a] >= 0) {
          b[cols_a[a]] += bb[a];
        }
      }
      for (const int rb : blocks) {
        if (!lin.active[rb]) {
          continue;
        }
        const std::array<int, 6>& cols_b =
            layout.pose_columns[problem.residuals[rb].pose];
        const Eigen::Matrix<double, 6, 6> coupling = w_a * lin.hpl[rb].transpose();
        for (int a = 0; a < 6; ++a) {
          if (cols_a[a] < 0) {
            continue;
          }
          for (int c = 0; c < 6; ++c) {
            if (cols_b[c] >= 0) {
              s(cols_a[a], cols_b[c]) -= coupling(a, c);
            }
          }
        }
      }
    }
  }

  *pose_step = Eigen::VectorXd::Zero(np);
  if (np > 0) {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
    if (ldlt.info() != Eigen::Success) {
      return false;
    }
    *pose_step = ldlt.solve(b);
    if (!pose_step->allFinite()) {
      return false;
    }
  }

  point_steps->assign(problem.points.size(), Eigen::Vector3d::Zero());
  for (size_t j = 0; j < problem.points.size(); ++j) {
    if (problem.points[j].fixed || layout.point_blocks[j].empty()) {
      continue;
    }
    Eigen::Vector3d rhs = -lin.gl[j];
    for (const int r : layout.point_blocks[j]) {
      if (!lin.active[r]) {
        continue;
      }
      const std::array<int, 6>& cols = layout.pose_columns[problem.residuals[r].pose];
      Eigen::Matrix<double, 6, 1> local = Eigen::Matrix<double, 6, 1>::Zero();
      for (int a = 0; a < 6; ++a) {
        if (cols[a] >= 0) {
          local[a] = (*pose_step)[cols[a]];
        }
      }
      rhs -= lin.hpl[r].transpose() * local;
    }
    (*point_steps)[j] = hll_inv[j] * rhs;
  }
  return true;
}

void ApplyStep(const ParameterLayout& layout, const Eigen::VectorXd& pose_step,
               const std::vector<Eigen::Vector3d>& point_steps,
               BAProblem* problem) {
  for (size_t i = 0; i < problem->poses.size(); ++i) {
    PoseBlock& block = problem->poses[i];
    const std::array<int, 6>& cols = layout.pose_columns[i];
    Eigen::Vector3d omega = Eigen::Vector3d::Zero();
    Eigen::Vector3d dt = Eigen::Vector3d::Zero();
    bool touched = false;
    for (int k = 0; k < 3; ++k) {
      if (cols[k] >= 0) {
        omega[k] = pose_step[cols[k]];
        touched = true;
      }
      if (cols[k + 3] >= 0) {
        dt[k] = pose_step[cols[k + 3]];
      }
    }
    if (touched) {
      block.pose.rotation = Orthonormalize(ExpSO3(omega) * block.pose.rotation);
    }
    for (int k = 0; k < 3; ++k) {
      if (cols[k + 3] >= 0) {
        block.pose.translation[k] += dt[k];
      }
    }
  }
  for (size_t j = 0; j < problem->points.size(); ++j) {
    if (!problem->points[j].fixed) {
      problem->points[j].position += point_steps[j];
    }
  }
}

}  // namespace

double TotalCost(const BAProblem& problem) {
  return EvaluateCost(problem, nullptr);
}

std::string ToString(BATermination termination) {
  switch (termination) {
    case BATermination::kFunctionTolerance: return "function tolerance";
    case BATermination::kGradientTolerance: return "gradient tolerance";
    case BATermination::kMaxIterations: return "max iterations";
    case BATermination::kStalled: return "stalled";
    case BATermination::kNoResiduals: return "no residuals";
  }
  return "unknown";
}

BAReport Optimize(BAProblem* problem, const BAOptions& options) {
  problem->Check();
  for (const PoseBlock& b : problem->poses) {
    if (!b.pose.rotation.allFinite() || !b.pose.translation.allFinite()) {
      throw DomainError("bundle adjustment pose is not finite");
    }
  }
  for (const PointBlock& b : problem->points) {
    if (!b.position.allFinite()) {
      throw DomainError("bundle adjustment point is not finite");
    }
  }
  BAReport report;
  int deactivated = 0;
  double cost = EvaluateCost(*problem, &deactivated);
  report.deactivated_blocks = deactivated;
  if (!std::isfinite(cost)) {
    throw DomainError("bundle adjustment starting cost is not finite");
  }
  report.initial_cost = report.final_cost = cost;
  report.cost_history.push_back(cost);
  if (problem->residuals.empty()) {
    report.termination = BATermination::kNoResiduals;
    return report;
  }

  const ParameterLayout layout(*problem);
  double lambda = options.initial_lambda;
  report.termination = BATermination::kMaxIterations;
  for (int iter = 0; iter < options.max_iters; ++iter) {
    const Linearization lin = Linearize(*problem, layout);
    if (lin.max_gradient < options.g_tol) {
      report.termination = BATermination::kGradientTolerance;
      break;
    }
    ++report.iterations;
    bool accepted = false;
    double relative_change = 0.0;
    for (int attempt = 0; attempt <= options.max_damping_escalations; ++attempt) {
      Eigen::VectorXd pose_step;
      std::vector<Eigen::Vector3d> point_steps;
      if (SolveStep(*problem, layout, lin, lambda, &pose_step, &point_steps)) {
        BAProblem candidate = *problem;
        ApplyStep(layout, pose_step, point_steps, &candidate);
        const double new_cost = EvaluateCost(candidate, nullptr);
        if (std::isfinite(new_cost) && new_cost < cost) {
          relative_change = (cost - new_cost) / std::max(cost, 1e-300);
          problem->poses = std::move(candidate.poses);
          problem->points = std::move(candidate.points);
          cost = new_cost;
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
          break;
        }
      }
      lambda = std::min(lambda * 10.0, 1e6);
    }
    if (!accepted) {
      report.stalled = true;
      report.termination = BATermination::kStalled;
      break;
    }
    ++report.accepted_steps;
    report.cost_history.push_back(cost);
    if (relative_change < options.f_tol) {
      report.termination = BATermination::kFunctionTolerance;
      break;
    }
  }
  report.final_cost = cost;
  return report;
}

}  // namespace omnisfm
