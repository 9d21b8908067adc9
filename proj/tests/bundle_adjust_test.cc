#include "omnisfm/bundle_adjust.h"

#include <gtest/gtest.h>

#include "omnisfm/error.h"
#include "omnisfm/synth_oracle.h"
#include "test_util.h"

namespace omnisfm {
namespace {

using testing::kDeg;

// Noiseless problem from the oracle scene with every view observed.
BAProblem ProblemFromScene(const GroundTruthScene& scene) {
  BAProblem p;
  for (const Pose& pose : scene.poses) {
    p.poses.push_back({pose});
  }
  p.poses[0].fix_rotation = p.poses[0].fix_translation = true;
  for (size_t j = 0; j < scene.points.size(); ++j) {
    p.points.push_back({scene.points[j]});
    for (int cam : scene.visibility[j]) {
      p.residuals.push_back(
          {cam, static_cast<int>(j), testing::Bearing(scene.poses[cam], scene.points[j])});
    }
  }
  return p;
}

GroundTruthScene SmallScene(uint64_t seed) {
  SceneSpec spec;
  spec.n_cams = 6;
  spec.n_points = 150;
  spec.seed = seed;
  return GenerateScene(spec);
}

TEST(Residual, Examples) {
  const Pose identity;
  const Eigen::Vector3d u(0.0, 0.6, 0.8);
  EXPECT_LT(Residual(identity, 3.7 * u, u).norm(), 1e-15);
  const Eigen::Vector3d r =
      Residual(identity, Eigen::Vector3d(2.0, 0.0, 0.0), Eigen::Vector3d::UnitZ());
  EXPECT_DOUBLE_EQ(r.x(), 1.0);
  EXPECT_DOUBLE_EQ(r.y(), 0.0);
  EXPECT_DOUBLE_EQ(r.z(), -1.0);
}

TEST(Residual, AtCameraCenterThrows) {
  const Pose pose{Eigen::Matrix3d::Identity(), Eigen::Vector3d(1.0, 2.0, 3.0)};
  EXPECT_THROW(Residual(pose, Eigen::Vector3d(-1.0, -2.0, -3.0), Eigen::Vector3d::UnitZ()),
               ProjectionUndefinedError);
}

TEST(Residual, ChordIdentity) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    const Pose pose{testing::RandomRotation(rng), testing::RandomUnit(rng)};
    const Eigen::Vector3d x = 5.0 * testing::RandomUnit(rng);
    const Eigen::Vector3d u = testing::RandomUnit(rng);
    const Eigen::Vector3d r = Residual(pose, x, u);
    const double angle = testing::Angle(testing::Bearing(pose, x), u);
    EXPECT_NEAR(r.squaredNorm(), 2.0 * (1.0 - std::cos(angle)), 1e-12);
  }
}

TEST(SoftL1, Examples) {
  EXPECT_EQ(SoftL1(0.0), 0.0);
  EXPECT_DOUBLE_EQ(SoftL1(3.0), 2.0);
  EXPECT_DOUBLE_EQ(SoftL1(8.0), 4.0);
}

TEST(SoftL1, ShapeAndScaledForm) {
  const double h = 1e-6;
  EXPECT_NEAR((SoftL1(h) - SoftL1(0.0)) / h, 1.0, 1e-6);
  double prev = 0.0;
  double prev_slope = 1.0 + 1e-12;
  for (double s = 0.01; s < 50.0; s += 0.01) {
    const double v = SoftL1(s);
    EXPECT_GT(v, prev);
    const double slope = (v - prev) / 0.01;
    EXPECT_LT(slope, prev_slope);
    prev = v;
    prev_slope = slope;
  }
  for (double c : {0.02, 0.5, 3.0}) {
    for (double s : {0.0, 1e-5, 0.3, 7.0}) {
      EXPECT_NEAR(ScaledSoftL1(s, c), c * c * 2.0 * (std::sqrt(1.0 + s / (c * c)) - 1.0),
                  1e-12 * (1.0 + s));
      const double fd = (ScaledSoftL1(s + 1e-7, c) - ScaledSoftL1(std::max(0.0, s - 1e-7), c)) /
                        (s + 1e-7 - std::max(0.0, s - 1e-7));
      EXPECT_NEAR(ScaledSoftL1Derivative(s, c), fd, 1e-4);
    }
  }
}

TEST(ResidualJacobians, MatchCentralDifferences) {
  std::mt19937_64 rng(2);
  const double h = 1e-6;
  double worst = 0.0;
  for (int block = 0; block < 100; ++block) {
    const Pose pose{testing::RandomRotation(rng), testing::RandomUnit(rng)};
    const Eigen::Vector3d x = 4.0 * testing::RandomUnit(rng);
    const Eigen::Vector3d u = testing::RandomUnit(rng);
    ResidualJacobians j;
    const Eigen::Vector3d r = ResidualWithJacobians(pose, x, u, &j);
    EXPECT_LT((r - Residual(pose, x, u)).norm(), 1e-15);

    Eigen::Matrix3d fd_rot, fd_trans, fd_point;
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector3d e = Eigen::Vector3d::Unit(k);
      Pose plus = pose, minus = pose;
      plus.rotation = testing::AxisAngle(e, h) * pose.rotation;
      minus.rotation = testing::AxisAngle(e, -h) * pose.rotation;
      fd_rot.col(k) = (Residual(plus, x, u) - Residual(minus, x, u)) / (2 * h);
      plus = minus = pose;
      plus.translation += h * e;
      minus.translation -= h * e;
      fd_trans.col(k) = (Residual(plus, x, u) - Residual(minus, x, u)) / (2 * h);
      fd_point.col(k) = (Residual(pose, x + h * e, u) - Residual(pose, x - h * e, u)) / (2 * h);
    }
    worst = std::max(worst, (j.rotation - fd_rot).norm() / fd_rot.norm());
    worst = std::max(worst, (j.translation - fd_trans).norm() / fd_trans.norm());
    worst = std::max(worst, (j.point - fd_point).norm() / fd_point.norm());
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(BlockCost, RobustAndPlain) {
  std::mt19937_64 rng(3);
  BAProblem p;
  p.poses.push_back({Pose{}, true, true});
  for (int i = 0; i < 5; ++i) {
    p.poses.push_back({Pose{testing::RandomRotation(rng), testing::RandomUnit(rng)}});
  }
  for (int j = 0; j < 20; ++j) {
    p.points.push_back({4.0 * testing::RandomUnit(rng)});
    for (int i = 0; i < 6; ++i) {
      p.residuals.push_back({i, j, testing::RandomUnit(rng)});
    }
  }
  for (double scale : {0.02, 1.0}) {
    p.robust_scale = scale;
    double plain_sum = 0.0, robust_sum = 0.0;
    for (const ResidualBlock& b : p.residuals) {
      const double s = (testing::Bearing(p.poses[b.pose].pose, p.points[b.point].position) -
                        b.observed).squaredNorm();
      const double robust = scale * scale * 2.0 * (std::sqrt(1.0 + s / (scale * scale)) - 1.0);
      p.robustify = false;
      EXPECT_NEAR(BlockCost(p, b), s, 1e-12);
      p.robustify = true;
      EXPECT_NEAR(BlockCost(p, b), robust, 1e-12);
      plain_sum += s;
      robust_sum += robust;
    }
    p.robustify = false;
    EXPECT_NEAR(TotalCost(p), plain_sum, 1e-9);
    p.robustify = true;
    EXPECT_NEAR(TotalCost(p), robust_sum, 1e-9);
  }
}

TEST(BAProblem, CheckRejectsBadInput) {
  BAProblem p;
  p.poses.push_back({Pose{}});
  p.points.push_back({Eigen::Vector3d(0, 0, 1)});
  p.residuals.push_back({0, 0, Eigen::Vector3d::UnitZ()});
  EXPECT_THROW(p.Check(), DomainError);  // no gauge pose
  p.poses[0].fix_rotation = p.poses[0].fix_translation = true;
  EXPECT_NO_THROW(p.Check());
  p.residuals.push_back({1, 0, Eigen::Vector3d::UnitZ()});
  EXPECT_THROW(p.Check(), DomainError);
  p.residuals.back() = {0, 4, Eigen::Vector3d::UnitZ()};
  EXPECT_THROW(p.Check(), DomainError);
}

TEST(Optimize, NonFiniteStartThrows) {
  BAProblem p;
  p.poses.push_back({Pose{}, true, true});
  p.points.push_back({Eigen::Vector3d(0, 0, std::nan(""))});
  p.residuals.push_back({0, 0, Eigen::Vector3d::UnitZ()});
  EXPECT_THROW(Optimize(&p), DomainError);
}

TEST(Optimize, GroundTruthIsFixedPoint) {
  const GroundTruthScene scene = SmallScene(5);
  for (bool robust : {false, true}) {
    BAProblem p = ProblemFromScene(scene);
    p.robustify = robust;
    const BAReport report = Optimize(&p);
    EXPECT_LT(report.final_cost, 1e-20);
    EXPECT_LE(report.iterations, 1);
  }
}

TEST(Optimize, ConvergesFromPerturbedPoses) {
  const GroundTruthScene scene = SmallScene(6);
  std::mt19937_64 rng(7);
  BAProblem p = ProblemFromScene(scene);
  const double baseline = (scene.poses[1].Center() - scene.poses[0].Center()).norm();
  for (size_t i = 1; i < p.poses.size(); ++i) {
    Pose& pose = p.poses[i].pose;
    pose.rotation = testing::AxisAngle(testing::RandomUnit(rng), 2.0 * kDeg) * pose.rotation;
    pose.translation += 0.05 * baseline * testing::RandomUnit(rng);
  }
  for (PointBlock& b : p.points) {
    b.position += 0.02 * testing::RandomUnit(rng);
  }
  const Eigen::Vector3d t1 = p.poses[1].pose.translation;
  int axis = 0;
  t1.cwiseAbs().maxCoeff(&axis);
  p.poses[1].pinned_translation_axis = axis;

  BAOptions opts;
  opts.max_iters = 200;
  opts.f_tol = 1e-16;
  opts.g_tol = 1e-16;
  const BAReport report = Optimize(&p, opts);
  EXPECT_LT(report.final_cost, 1e-18);
  EXPECT_EQ(p.poses[1].pose.translation[axis], t1[axis]);

  // The first pose is fixed, so the remaining gauge is a scaling about its
  // center.
  const Eigen::Vector3d c0 = scene.poses[0].Center();
  const double s = (scene.poses[1].Center() - c0).norm() / (p.poses[1].pose.Center() - c0).norm();
  auto anchor = [&](const Eigen::Vector3d& x) { return c0 + s * (x - c0); };
  for (size_t i = 0; i < scene.poses.size(); ++i) {
    EXPECT_LT(testing::RotationAngleDeg(p.poses[i].pose.rotation, scene.poses[i].rotation) * kDeg,
              1e-6);
    EXPECT_LT((anchor(p.poses[i].pose.Center()) - scene.poses[i].Center()).norm(), 1e-6);
  }
  for (size_t j = 0; j < scene.points.size(); ++j) {
    EXPECT_LT((anchor(p.points[j].position) - scene.points[j]).norm(), 1e-6);
  }
}

TEST(Optimize, CostNonIncreasingAndRotationsOrthonormal) {
  std::mt19937_64 rng(8);
  const GroundTruthScene scene = SmallScene(9);
  for (bool robust : {false, true}) {
    BAProblem p = ProblemFromScene(scene);
    p.robustify = robust;
    p.poses[2].fix_rotation = true;
    p.points[3].fixed = true;
    for (size_t i = 1; i < p.poses.size(); ++i) {
      Pose& pose = p.poses[i].pose;
      if (!p.poses[i].fix_rotation) {
        pose.rotation = testing::AxisAngle(testing::RandomUnit(rng), 5.0 * kDeg) * pose.rotation;
      }
      pose.translation += 0.2 * testing::RandomUnit(rng);
    }
    for (ResidualBlock& b : p.residuals) {
      b.observed = (b.observed + 0.01 * testing::RandomUnit(rng)).normalized();
    }
    const BAProblem before = p;
    const BAReport report = Optimize(&p);
    ASSERT_GE(report.cost_history.size(), 2u);
    EXPECT_EQ(report.cost_history.front(), report.initial_cost);
    EXPECT_EQ(report.cost_history.back(), report.final_cost);
    for (size_t k = 1; k < report.cost_history.size(); ++k) {
      EXPECT_LT(report.cost_history[k], report.cost_history[k - 1]);
    }
    EXPECT_NEAR(report.final_cost, TotalCost(p), 1e-12);
    for (const PoseBlock& b : p.poses) {
      EXPECT_LT((b.pose.rotation * b.pose.rotation.transpose() - Eigen::Matrix3d::Identity())
                    .cwiseAbs()
                    .maxCoeff(),
                1e-9);
      EXPECT_NEAR(b.pose.rotation.determinant(), 1.0, 1e-9);
    }
    // Fixed blocks are bit-identical.
    EXPECT_TRUE(p.poses[0].pose.rotation == before.poses[0].pose.rotation);
    EXPECT_TRUE(p.poses[0].pose.translation == before.poses[0].pose.translation);
    EXPECT_TRUE(p.poses[2].pose.rotation == before.poses[2].pose.rotation);
    EXPECT_FALSE(p.poses[2].pose.translation == before.poses[2].pose.translation);
    EXPECT_TRUE(p.points[3].position == before.points[3].position);
  }
}

TEST(Optimize, NoResiduals) {
  BAProblem p;
  p.poses.push_back({Pose{}, true, true});
  const BAReport report = Optimize(&p);
  EXPECT_EQ(report.termination, BATermination::kNoResiduals);
}

TEST(Optimize, StallsWhenNoStepHelps) {
  // Everything except one point is fixed and the point's only observation
  // is at the camera center: no step can be accepted.
  BAProblem p;
  p.poses.push_back({Pose{}, true, true});
  p.points.push_back({Eigen::Vector3d(0.0, 0.0, 2.0)});
  p.residuals.push_back({0, 0, Eigen::Vector3d::UnitZ()});
  const BAReport done = Optimize(&p);
  EXPECT_FALSE(done.stalled);

  BAOptions opts;
  opts.g_tol = 0.0;
  opts.f_tol = 0.0;
  BAProblem q;
  q.poses.push_back({Pose{}, true, true});
  q.points.push_back({Eigen::Vector3d(1.0, 0.0, 2.0)});
  q.residuals.push_back({0, 0, Eigen::Vector3d::UnitZ()});
  q.residuals.push_back({0, 0, Eigen::Vector3d::UnitX()});
  const BAReport report = Optimize(&q, opts);
  // Two conflicting bearings: the optimum is reached, after which no step
  // lowers the cost and damping escalates until the stall limit.
  EXPECT_TRUE(report.stalled);
  EXPECT_EQ(report.termination, BATermination::kStalled);
  EXPECT_TRUE(std::isfinite(report.final_cost));
  EXPECT_LE(report.final_cost, report.initial_cost);
}

}  // namespace
}  // namespace omnisfm
