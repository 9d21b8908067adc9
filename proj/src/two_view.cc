#include "omnisfm/two_view.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "omnisfm/error.h"
#include "omnisfm/random.h"

namespace omnisfm {

namespace {

constexpr int kMinimalSample = 8;
constexpr int kFinalRefitSteps = 30;

// T = M^(-1/2) for the second-moment matrix M = (1/n) sum u u^T. Falls
// back to the identity when the bearings span less than 3 dimensions.
Eigen::Matrix3d WhiteningTransform(std::span<const BearingPair> pairs,
                                   bool first) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (const BearingPair& p : pairs) {
    const Eigen::Vector3d& u = first ? p.u1 : p.u2;
    m += u * u.transpose();
  }
  m /= static_cast<double>(pairs.size());
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(m);
  const Eigen::Vector3d values = eig.eigenvalues();
  if (!(values.minCoeff() > 1e-9 * values.maxCoeff())) {
    return Eigen::Matrix3d::Identity();
  }
  return eig.eigenvectors() * values.cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace

Eigen::Matrix3d ProjectToEssentialManifold(const Eigen::Matrix3d& e) {
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  const double s = 0.5 * (sv[0] + sv[1]);
  Eigen::Matrix3d projected =
      svd.matrixU() * Eigen::Vector3d(s, s, 0.0).asDiagonal() *
      svd.matrixV().transpose();
  const double norm = projected.norm();
  if (norm > 0.0) {
    projected /= norm;
  }
  return projected;
}

namespace {

// Weighted DLT: row i of the design matrix is scaled by weights[i] (all
// ones when `weights` is empty).
EssentialEstimate SolveEssential(std::span<const BearingPair> pairs,
                                 std::span<const double> weights) {
  const int n = static_cast<int>(pairs.size());
  if (n < kMinimalSample) {
    throw InsufficientDataError("8-point estimation needs >= 8 correspondences, got " +
                                std::to_string(n));
  }
  const Eigen::Matrix3d t1 = WhiteningTransform(pairs, true);
  const Eigen::Matrix3d t2 = WhiteningTransform(pairs, false);

  // Pad to at least 9 rows so the 9th singular value is always defined.
  Eigen::Matrix<double, Eigen::Dynamic, 9> a =
      Eigen::Matrix<double, Eigen::Dynamic, 9>::Zero(std::max(n, 9), 9);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d v1 = (t1 * pairs[i].u1).normalized();
    const Eigen::Vector3d v2 = (t2 * pairs[i].u2).normalized();
    const double w = weights.empty() ? 1.0 : weights[i];
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) {
        a(i, 3 * j + k) = w * v2[j] * v1[k];
      }
    }
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  const Eigen::Matrix<double, 9, 1> null = svd.matrixV().col(8);
  Eigen::Matrix3d e_normalized;
  e_normalized << null[0], null[1], null[2],
                  null[3], null[4], null[5],
                  null[6], null[7], null[8];

  EssentialEstimate estimate;
  estimate.singular_ratio = sv[7] > 0.0 ? sv[8] / sv[7] : 1.0;
  // A second vanishing singular value also means a multi-dimensional null
  // space, even when round-off makes the ratio arbitrary.
  estimate.ambiguous = estimate.singular_ratio > 0.99 || sv[7] <= 1e-10 * sv[0];
  // u2'^T E' u1' = 0 with u' ~ T u gives E = T2^T E' T1 (T symmetric).
  estimate.essential.e =
      ProjectToEssentialManifold(t2.transpose() * e_normalized * t1);
  return estimate;
}

}  // namespace

EssentialEstimate EstimateEssential8pt(std::span<const BearingPair> pairs) {
  return SolveEssential(pairs, {});
}

double EpipolarResidual(const Eigen::Matrix3d& e, const Eigen::Vector3d& u1,
                        const Eigen::Vector3d& u2, bool* on_epipole) {
  // Normal of the epipolar plane of u1, expressed in camera 2, and of u2
  // expressed in camera 1.
  const Eigen::Vector3d n2 = e * u1;
  const Eigen::Vector3d n1 = e.transpose() * u2;
  const double norm2 = n2.norm();
  const double norm1 = n1.norm();
  const double scale = e.norm();
  if (norm1 <= 1e-12 * scale || norm2 <= 1e-12 * scale) {
    if (on_epipole != nullptr) {
      *on_epipole = true;
    }
    return 0.0;
  }
  if (on_epipole != nullptr) {
    *on_epipole = false;
  }
  const double s2 = std::min(1.0, std::abs(n2.dot(u2)) / norm2);
  const double s1 = std::min(1.0, std::abs(n1.dot(u1)) / norm1);
  return 0.5 * (std::asin(s2) + std::asin(s1));
}

std::array<RelativeMotion, 4> EssentialCandidates(const Eigen::Matrix3d& e) {
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  if (u.determinant() < 0.0) {
    u.col(2) *= -1.0;
  }
  if (v.determinant() < 0.0) {
    v.col(2) *= -1.0;
  }
  Eigen::Matrix3d w;
  w << 0, -1, 0,
       1, 0, 0,
       0, 0, 1;
  const Eigen::Matrix3d r1 = u * w * v.transpose();
  const Eigen::Matrix3d r2 = u * w.transpose() * v.transpose();
  const Eigen::Vector3d t = u.col(2).normalized();
  return {RelativeMotion{r1, t}, RelativeMotion{r1, -t},
          RelativeMotion{r2, t}, RelativeMotion{r2, -t}};
}

std::optional<Eigen::Vector2d> MidpointDepths(const RelativeMotion& motion,
                                              const Eigen::Vector3d& u1,
                                              const Eigen::Vector3d& u2) {
  const Eigen::Vector3d c2 = -motion.rotation.transpose() * motion.translation;
  const Eigen::Vector3d d2 = motion.rotation.transpose() * u2;
  const double b = u1.dot(d2);
  const double denom = 1.0 - b * b;
  if (denom < 1e-12) {
    return std::nullopt;
  }
  const double d = u1.dot(c2);
  const double e = d2.dot(c2);
  return Eigen::Vector2d((d - b * e) / denom, (b * d - e) / denom);
}

Eigen::Vector3d MidpointPoint(const RelativeMotion& motion,
                              const Eigen::Vector3d& u1,
                              const Eigen::Vector3d& u2,
                              const Eigen::Vector2d& depths) {
  const Eigen::Vector3d c2 = -motion.rotation.transpose() * motion.translation;
  const Eigen::Vector3d d2 = motion.rotation.transpose() * u2;
  return 0.5 * (depths[0] * u1 + c2 + depths[1] * d2);
}

int CountPositiveDepth(const RelativeMotion& motion,
                       std::span<const BearingPair> pairs) {
  int votes = 0;
  for (const BearingPair& p : pairs) {
    const auto depths = MidpointDepths(motion, p.u1, p.u2);
    if (depths && (*depths)[0] > 0.0 && (*depths)[1] > 0.0) {
      ++votes;
    }
  }
  return votes;
}

RelativeMotion DecomposeEssential(const Eigen::Matrix3d& e,
                                  std::span<const BearingPair> inliers) {
  if (inliers.empty()) {
    throw InsufficientDataError("decomposition needs at least one inlier");
  }
  const auto candidates = EssentialCandidates(e);
  int best = -1;
  int best_votes = -1;
  for (int i = 0; i < 4; ++i) {
    const int votes = CountPositiveDepth(candidates[i], inliers);
    if (votes > best_votes) {
      best_votes = votes;
      best = i;
    }
  }
  if (2 * best_votes <= static_cast<int>(inliers.size())) {
    throw CheiralityAmbiguousError(
        "no decomposition has a strict majority of positive depths (" +
        std::to_string(best_votes) + "/" + std::to_string(inliers.size()) + ")");
  }
  return candidates[best];
}

void RansacOptions::Check() const {
  if (!(threshold > 0.0) || max_iters < 1 || !(confidence > 0.0) ||
      !(confidence < 1.0) || min_inliers < kMinimalSample) {
    throw DomainError("invalid RANSAC options");
  }
}

std::string ToString(TwoViewStatus status) {
  switch (status) {
    case TwoViewStatus::kVerified: return "verified";
    case TwoViewStatus::kTooFewInliers: return "too few inliers";
    case TwoViewStatus::kCheiralityAmbiguous: return "cheirality ambiguous";
  }
  return "unknown";
}

int RequiredIterations(double inlier_ratio, int sample_size, double confidence,
                       int max_iters) {
  const double all_inlier = std::pow(inlier_ratio, sample_size);
  if (all_inlier >= 1.0) {
    return 1;
  }
  if (all_inlier <= std::numeric_limits<double>::min()) {
    return max_iters;
  }
  const double n = std::log(1.0 - confidence) / std::log1p(-all_inlier);
  if (!std::isfinite(n) || n >= max_iters) {
    return max_iters;
  }
  return std::max(1, static_cast<int>(std::ceil(n)));
}

namespace {

struct Score {
  int inliers = -1;
  double residual_sum = std::numeric_limits<double>::infinity();

  bool BetterThan(const Score& other) const {
    if (inliers != other.inliers) {
      return inliers > other.inliers;
    }
    return residual_sum < other.residual_sum;
  }
};

Score Evaluate(const Eigen::Matrix3d& e, std::span<const BearingPair> pairs,
               double threshold) {
  Score score;
  score.inliers = 0;
  score.residual_sum = 0.0;
  for (const BearingPair& p : pairs) {
    const double r = EpipolarResidual(e, p.u1, p.u2);
    if (r < threshold) {
      ++score.inliers;
      score.residual_sum += r;
    }
  }
  return score;
}

std::vector<BearingPair> Inliers(const Eigen::Matrix3d& e,
                                 std::span<const BearingPair> pairs,
                                 double threshold) {
  std::vector<BearingPair> inliers;
  for (const BearingPair& p : pairs) {
    if (EpipolarResidual(e, p.u1, p.u2) < threshold) {
      inliers.push_back(p);
    }
  }
  return inliers;
}

// Iteratively reweighted fit on the inliers of `e`. Row weights
// 1 / sqrt(residual) turn the squared algebraic error into an L1-type cost,
// so a marginal point cannot tilt the fit far enough to pull itself inside
// the threshold.
Eigen::Matrix3d ReweightedRefit(Eigen::Matrix3d e, std::span<const BearingPair> pairs,
                                double threshold, int max_steps) {
  for (int step = 0; step < max_steps; ++step) {
    const std::vector<BearingPair> inliers = Inliers(e, pairs, threshold);
    if (static_cast<int>(inliers.size()) < kMinimalSample) {
      break;
    }
    std::vector<double> weights(inliers.size());
    for (size_t i = 0; i < inliers.size(); ++i) {
      const double r = EpipolarResidual(e, inliers[i].u1, inliers[i].u2);
      weights[i] = 1.0 / std::sqrt(std::max(r, 1e-3 * threshold));
    }
    const Eigen::Matrix3d next = SolveEssential(inliers, weights).essential.e;
    const double change = std::min((next - e).norm(), (next + e).norm());
    e = next;
    if (change < 1e-12) {
      break;
    }
  }
  return e;
}

}  // namespace

TwoViewResult RansacTwoView(std::span<const BearingPair> pairs,
                            const RansacOptions& options) {
  options.Check();
  const int n = static_cast<int>(pairs.size());
  if (n < kMinimalSample) {
    throw InsufficientDataError("two-view RANSAC needs >= 8 correspondences");
  }

  CounterRng rng(options.seed, 0);
  Eigen::Matrix3d best_e = Eigen::Matrix3d::Zero();
  Score best;
  int iterations = 0;
  int required = options.max_iters;
  std::vector<BearingPair> sample(kMinimalSample);
  for (; iterations < required; ++iterations) {
    const std::vector<int> indices = rng.Sample(n, kMinimalSample);
    for (int i = 0; i < kMinimalSample; ++i) {
      sample[i] = pairs[indices[i]];
    }
    const EssentialEstimate hypothesis = EstimateEssential8pt(sample);
    if (hypothesis.ambiguous) {
      continue;
    }
    Eigen::Matrix3d e = hypothesis.essential.e;
    Score score = Evaluate(e, pairs, options.threshold);
    if (!score.BetterThan(best)) {
      continue;
    }
    // Local optimization: reweighted re-fit while it helps.
    for (int step = 0; step < options.max_local_steps; ++step) {
      const Eigen::Matrix3d refined = ReweightedRefit(e, pairs, options.threshold, 1);
      const Score refined_score = Evaluate(refined, pairs, options.threshold);
      if (!refined_score.BetterThan(score)) {
        break;
      }
      e = refined;
      score = refined_score;
    }
    best = score;
    best_e = e;
    required = RequiredIterations(static_cast<double>(best.inliers) / n,
                                  kMinimalSample, options.confidence,
                                  options.max_iters);
  }

  TwoViewResult result;
  result.geometry.iterations = iterations;
  if (best.inliers < options.min_inliers) {
    result.status = TwoViewStatus::kTooFewInliers;
    result.geometry.num_inliers = std::max(best.inliers, 0);
    return result;
  }

  // The winner's inlier set is settled by a converged reweighted fit; the
  // final model is the plain 8-point estimate on that set.
  const Eigen::Matrix3d settled =
      ReweightedRefit(best_e, pairs, options.threshold, kFinalRefitSteps);
  const std::vector<BearingPair> inliers = Inliers(settled, pairs, options.threshold);
  if (static_cast<int>(inliers.size()) >= kMinimalSample) {
    best_e = EstimateEssential8pt(inliers).essential.e;
  }

  TwoViewGeometry& g = result.geometry;
  g.essential.e = best_e;
  g.inlier_mask.resize(n);
  g.residuals.resize(n);
  std::vector<BearingPair> final_inliers;
  for (int i = 0; i < n; ++i) {
    g.residuals[i] = EpipolarResidual(best_e, pairs[i].u1, pairs[i].u2);
    g.inlier_mask[i] = g.residuals[i] < options.threshold;
    if (g.inlier_mask[i]) {
      final_inliers.push_back(pairs[i]);
    }
  }
  g.num_inliers = static_cast<int>(final_inliers.size());
  if (g.num_inliers < options.min_inliers) {
    result.status = TwoViewStatus::kTooFewInliers;
    return result;
  }
  try {
    const RelativeMotion motion = DecomposeEssential(best_e, final_inliers);
    g.rotation = motion.rotation;
    g.translation = motion.translation;
    result.status = TwoViewStatus::kVerified;
  } catch (const CheiralityAmbiguousError&) {
    result.status = TwoViewStatus::kCheiralityAmbiguous;
  }
  return result;
}

}  // namespace omnisfm
