#include "omnisfm/absolute_pose.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "omnisfm/error.h"
#include "omnisfm/random.h"
#include "omnisfm/two_view.h"

namespace omnisfm {

namespace {

// Real roots of c4 x^4 + c3 x^3 + c2 x^2 + c1 x + c0, polished by Newton.
std::vector<double> RealQuarticRoots(const Eigen::Matrix<double, 5, 1>& c) {
  std::vector<double> roots;
  if (std::abs(c[4]) < 1e-14 * c.cwiseAbs().maxCoeff()) {
    return roots;
  }
  Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
  for (int i = 0; i < 4; ++i) {
    companion(0, i) = -c[3 - i] / c[4];
  }
  companion(1, 0) = companion(2, 1) = companion(3, 2) = 1.0;
  const Eigen::EigenSolver<Eigen::Matrix4d> eig(companion, false);
  for (int i = 0; i < 4; ++i) {
    const std::complex<double> z = eig.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-6 * std::max(1.0, std::abs(z.real()))) {
      continue;
    }
    double x = z.real();
    for (int it = 0; it < 5; ++it) {
      const double f = (((c[4] * x + c[3]) * x + c[2]) * x + c[1]) * x + c[0];
      const double df = ((4 * c[4] * x + 3 * c[3]) * x + 2 * c[2]) * x + c[1];
      if (df == 0.0) {
        break;
      }
      x -= f / df;
    }
    roots.push_back(x);
  }
  return roots;
}

// Orthonormal basis of the plane perpendicular to u.
std::pair<Eigen::Vector3d, Eigen::Vector3d> TangentBasis(const Eigen::Vector3d& u) {
  const Eigen::Vector3d helper =
      std::abs(u.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d e1 = u.cross(helper).normalized();
  return {e1, u.cross(e1)};
}

}  // namespace

Pose AlignPoints(std::span<const Eigen::Vector3d> src,
                 std::span<const Eigen::Vector3d> dst) {
  const size_t n = src.size();
  Eigen::Vector3d mean_src = Eigen::Vector3d::Zero();
  Eigen::Vector3d mean_dst = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    mean_src += src[i];
    mean_dst += dst[i];
  }
  mean_src /= static_cast<double>(n);
  mean_dst /= static_cast<double>(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    cov += (dst[i] - mean_dst) * (src[i] - mean_src).transpose();
  }
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  Pose pose;
  pose.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  pose.translation = mean_dst - pose.rotation * mean_src;
  return pose;
}

std::vector<Pose> SolveP3P(std::span<const BearingPointPair, 3> sample) {
  const Eigen::Vector3d& f1 = sample[0].bearing;
  const Eigen::Vector3d& f2 = sample[1].bearing;
  const Eigen::Vector3d& f3 = sample[2].bearing;
  const Eigen::Vector3d& p1 = sample[0].point;
  const Eigen::Vector3d& p2 = sample[1].point;
  const Eigen::Vector3d& p3 = sample[2].point;

  // Side lengths opposite to the ray angles alpha (2,3), beta (1,3),
  // gamma (1,2).
  const double a2 = (p2 - p3).squaredNorm();
  const double b2 = (p1 - p3).squaredNorm();
  const double c2 = (p1 - p2).squaredNorm();
  if (a2 < 1e-24 || b2 < 1e-24 || c2 < 1e-24) {
    return {};
  }
  const double ca = f2.dot(f3);
  const double cb = f1.dot(f3);
  const double cg = f1.dot(f2);

  const double amc = (a2 - c2) / b2;
  const double apc = (a2 + c2) / b2;
  const double bmc = (b2 - c2) / b2;
  const double bma = (b2 - a2) / b2;

  Eigen::Matrix<double, 5, 1> k;
  k[4] = (amc - 1) * (amc - 1) - 4 * c2 / b2 * ca * ca;
  k[3] = 4 * (amc * (1 - amc) * cb - (1 - apc) * ca * cg +
              2 * c2 / b2 * ca * ca * cb);
  k[2] = 2 * (amc * amc - 1 + 2 * amc * amc * cb * cb + 2 * bmc * ca * ca -
              4 * apc * ca * cb * cg + 2 * bma * cg * cg);
  k[1] = 4 * (-amc * (1 + amc) * cb + 2 * a2 / b2 * cg * cg * cb -
              (1 - apc) * ca * cg);
  k[0] = (1 + amc) * (1 + amc) - 4 * a2 / b2 * cg * cg;

  std::vector<Pose> poses;
  const std::array<Eigen::Vector3d, 3> world = {p1, p2, p3};
  for (const double v : RealQuarticRoots(k)) {
    const double denom = 2 * (cg - v * ca);
    if (std::abs(denom) < 1e-14) {
      continue;
    }
    const double u = ((-1 + amc) * v * v - 2 * amc * cb * v + 1 + amc) / denom;
    const double s1_sq = b2 / (1 + v * v - 2 * v * cb);
    if (!(s1_sq > 0.0) || u <= 0.0 || v <= 0.0) {
      continue;
    }
    const double s1 = std::sqrt(s1_sq);
    const std::array<Eigen::Vector3d, 3> camera = {s1 * f1, u * s1 * f2,
                                                   v * s1 * f3};
    Pose pose = AlignPoints(world, camera);
    if (pose.rotation.allFinite() && pose.translation.allFinite()) {
      poses.push_back(pose);
    }
  }
  return poses;
}

Eigen::Vector2d TangentAngularResidual(const Pose& pose,
                                       const BearingPointPair& obs) {
  const Eigen::Vector3d p = pose.Apply(obs.point);
  const double norm = p.norm();
  if (!(norm > kCenterEpsilon)) {
    return Eigen::Vector2d::Constant(std::numbers::pi);
  }
  const Eigen::Vector3d q = p / norm;
  const Eigen::Vector3d& u = obs.bearing;
  const Eigen::Vector3d w = q - q.dot(u) * u;
  const double sin_angle = w.norm();
  const double angle = std::atan2(sin_angle, q.dot(u));
  const auto [e1, e2] = TangentBasis(u);
  const double scale = sin_angle > 1e-15 ? angle / sin_angle : 1.0;
  return scale * Eigen::Vector2d(e1.dot(w), e2.dot(w));
}

namespace {

Pose Perturb(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  Pose out;
  out.rotation = ExpSO3(delta.head<3>()) * pose.rotation;
  out.translation = pose.translation + delta.tail<3>();
  return out;
}

double AngularCost(const Pose& pose, std::span<const BearingPointPair> obs) {
  double cost = 0.0;
  for (const BearingPointPair& o : obs) {
    cost += TangentAngularResidual(pose, o).squaredNorm();
  }
  return cost;
}

}  // namespace

Pose RefinePoseAngular(const Pose& initial,
                       std::span<const BearingPointPair> observations,
                       const PoseRefineOptions& options) {
  Pose pose = initial;
  double cost = AngularCost(pose, observations);
  double lambda = 1e-4;
  constexpr double kStep = 1e-7;
  for (int iter = 0; iter < options.max_iters; ++iter) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (const BearingPointPair& o : observations) {
      const Eigen::Vector2d r = TangentAngularResidual(pose, o);
      Eigen::Matrix<double, 2, 6> jac;
      for (int k = 0; k < 6; ++k) {
        Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
        d[k] = kStep;
        jac.col(k) = (TangentAngularResidual(Perturb(pose, d), o) -
                      TangentAngularResidual(Perturb(pose, -d), o)) /
                     (2 * kStep);
      }
      h += jac.transpose() * jac;
      g += jac.transpose() * r;
    }
    if (g.lpNorm<Eigen::Infinity>() < 1e-16) {
      break;
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
      Eigen::Matrix<double, 6, 6> damped = h;
      damped.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-g);
      const Pose candidate = Perturb(pose, delta);
      const double candidate_cost = AngularCost(candidate, observations);
      if (candidate_cost < cost) {
        const double change = (cost - candidate_cost) / std::max(cost, 1e-300);
        pose = candidate;
        pose.rotation = Orthonormalize(pose.rotation);
        cost = candidate_cost;
        lambda = std::max(lambda / 10, 1e-12);
        accepted = true;
        if (change < options.f_tol) {
          return pose;
        }
      } else {
        lambda = std::min(lambda * 10, 1e6);
      }
    }
    if (!accepted) {
      break;
    }
  }
  return pose;
}

void ResectionOptions::Check() const {
  if (!(threshold > 0.0) || max_iters < 1 || !(confidence > 0.0) ||
      !(confidence < 1.0) || min_inliers < 4) {
    throw DomainError("invalid resection options");
  }
}

namespace {

struct PoseScore {
  int inliers = -1;
  double residual_sum = std::numeric_limits<double>::infinity();
  bool BetterThan(const PoseScore& o) const {
    if (inliers != o.inliers) {
      return inliers > o.inliers;
    }
    return residual_sum < o.residual_sum;
  }
};

PoseScore ScorePose(const Pose& pose, std::span<const BearingPointPair> corrs,
                    double threshold) {
  PoseScore score{0, 0.0};
  for (const BearingPointPair& c : corrs) {
    const double r = TangentAngularResidual(pose, c).norm();
    if (r < threshold) {
      ++score.inliers;
      score.residual_sum += r;
    }
  }
  return score;
}

std::vector<BearingPointPair> PoseInliers(const Pose& pose,
                                          std::span<const BearingPointPair> corrs,
                                          double threshold) {
  std::vector<BearingPointPair> inliers;
  for (const BearingPointPair& c : corrs) {
    if (TangentAngularResidual(pose, c).norm() < threshold) {
      inliers.push_back(c);
    }
  }
  return inliers;
}

}  // namespace

ResectionResult EstimateAbsolutePose(std::span<const BearingPointPair> corrs,
                                     const ResectionOptions& options) {
  options.Check();
  const int n = static_cast<int>(corrs.size());
  if (n < 4) {
    throw InsufficientDataError("resection needs >= 4 correspondences, got " +
                                std::to_string(n));
  }
  CounterRng rng(options.seed, 1);
  ResectionResult result;
  Pose best_pose;
  PoseScore best;
  int required = options.max_iters;
  int iterations = 0;
  for (; iterations < required; ++iterations) {
    const std::vector<int> idx = rng.Sample(n, 4);
    const std::array<BearingPointPair, 3> sample = {corrs[idx[0]], corrs[idx[1]],
                                                    corrs[idx[2]]};
    for (const Pose& pose : SolveP3P(sample)) {
      if (TangentAngularResidual(pose, corrs[idx[3]]).norm() >= options.threshold) {
        continue;
      }
      const PoseScore score = ScorePose(pose, corrs, options.threshold);
      if (score.BetterThan(best)) {
        best = score;
        best_pose = pose;
        required = RequiredIterations(static_cast<double>(best.inliers) / n, 4,
                                      options.confidence, options.max_iters);
      }
    }
  }
  result.iterations = iterations;
  if (best.inliers < options.min_inliers) {
    result.num_inliers = std::max(0, best.inliers);
    return result;
  }

  // Refine on inliers, then once more on the refreshed inlier set.
  Pose pose = best_pose;
  for (int round = 0; round < 2; ++round) {
    const std::vector<BearingPointPair> inliers =
        PoseInliers(pose, corrs, options.threshold);
    if (static_cast<int>(inliers.size()) < 4) {
      break;
    }
    pose = RefinePoseAngular(pose, inliers);
  }

  result.pose = pose;
  result.inlier_mask.resize(n);
  for (int i = 0; i < n; ++i) {
    result.inlier_mask[i] =
        TangentAngularResidual(pose, corrs[i]).norm() < options.threshold;
    result.num_inliers += result.inlier_mask[i] ? 1 : 0;
  }
  result.success = result.num_inliers >= options.min_inliers;
  return result;
}

}  // namespace omnisfm
