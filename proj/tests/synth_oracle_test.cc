#include "omnisfm/synth_oracle.h"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "omnisfm/error.h"
#include "omnisfm/io.h"
#include "test_util.h"

#ifndef OMNISFM_FIXTURE_DIR
#error "OMNISFM_FIXTURE_DIR must be defined"
#endif

namespace omnisfm {
namespace {

using testing::kDeg;
using testing::kPi;

bool SameScene(const GroundTruthScene& a, const GroundTruthScene& b) {
  if (a.poses.size() != b.poses.size() || a.points.size() != b.points.size()) {
    return false;
  }
  for (size_t i = 0; i < a.poses.size(); ++i) {
    if (a.poses[i].rotation != b.poses[i].rotation ||
        a.poses[i].translation != b.poses[i].translation) {
      return false;
    }
  }
  for (size_t j = 0; j < a.points.size(); ++j) {
    if (a.points[j] != b.points[j] || a.visibility[j] != b.visibility[j]) {
      return false;
    }
  }
  return true;
}

TEST(GenerateScene, Deterministic) {
  SceneSpec spec;
  spec.n_cams = 7;
  spec.n_points = 300;
  spec.seed = 99;
  EXPECT_TRUE(SameScene(GenerateScene(spec), GenerateScene(spec)));
  SceneSpec other = spec;
  other.seed = 100;
  EXPECT_FALSE(SameScene(GenerateScene(spec), GenerateScene(other)));
}

TEST(GenerateScene, UnitBoxTwoCameras) {
  SceneSpec spec;
  spec.n_cams = 2;
  spec.n_points = 8;
  spec.room = {1.0, 1.0, 1.0};
  const GroundTruthScene scene = GenerateScene(spec);
  ASSERT_EQ(scene.points.size(), 8u);
  for (const std::set<int>& vis : scene.visibility) {
    EXPECT_EQ(vis, (std::set<int>{0, 1}));
  }
}

TEST(GenerateScene, GeometryInvariants) {
  SceneSpec spec;
  spec.n_cams = 30;
  spec.n_points = 2000;
  spec.seed = 5;
  const GroundTruthScene scene = GenerateScene(spec);
  const Eigen::Vector3d half = spec.room.HalfExtents();
  for (const Pose& pose : scene.poses) {
    EXPECT_TRUE(pose.IsValid(1e-12));
    const Eigen::Vector3d c = pose.Center();
    EXPECT_TRUE((c.cwiseAbs().array() < half.array()).all());
  }
  for (size_t j = 0; j < scene.points.size(); ++j) {
    const Eigen::Vector3d x = scene.points[j];
    const Eigen::Vector3d gap = (x.cwiseAbs() - half).cwiseAbs();
    EXPECT_LT(gap.minCoeff(), 1e-12);  // on a wall
    EXPECT_TRUE((x.cwiseAbs().array() <= half.array() + 1e-12).all());
    EXPECT_GE(scene.visibility[j].size(), 2u);
  }
}

TEST(GenerateScene, RejectsDegenerateInput) {
  SceneSpec spec;
  spec.room.height = 0.0;
  EXPECT_THROW(GenerateScene(spec), DomainError);
  spec = SceneSpec{};
  spec.n_cams = 1;
  EXPECT_THROW(GenerateScene(spec), DomainError);
  spec = SceneSpec{};
  spec.n_points = 7;
  EXPECT_THROW(GenerateScene(spec), DomainError);
}

TEST(GenerateScene, AcceptanceFixtureIsReproduced) {
  SceneSpec spec;  // 20 cams, 1000 points, 8 x 6 x 3 room, seed 42
  const GroundTruthScene scene = GenerateScene(spec);
  SceneData data;
  for (size_t i = 0; i < scene.poses.size(); ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "cam%03zu", i);
    data.poses.emplace_back(name, scene.poses[i]);
  }
  for (size_t j = 0; j < scene.points.size(); ++j) {
    data.points.emplace_back(static_cast<int>(j), scene.points[j]);
  }
  std::ostringstream out;
  WriteScene(out, data);
  std::ifstream in(std::string(OMNISFM_FIXTURE_DIR) + "/acceptance_scene.txt");
  ASSERT_TRUE(in.good());
  std::stringstream fixture;
  fixture << in.rdbuf();
  EXPECT_EQ(out.str(), fixture.str());
}

TEST(Observe, NoiselessSatisfiesEpipolarConstraint) {
  SceneSpec spec;
  spec.n_cams = 6;
  spec.n_points = 200;
  const GroundTruthScene scene = GenerateScene(spec);
  const ErpDims dims{640, 320};
  const SyntheticMatches sm = Observe(scene, {dims, 0.0, 0.0, -1});
  ASSERT_EQ(sm.pairs.size(), 15u);
  double worst = 0.0, worst_reproj = 0.0;
  for (const PairMatches& pm : sm.pairs) {
    const Pose& p1 = scene.poses[pm.image_a];
    const Pose& p2 = scene.poses[pm.image_b];
    const Eigen::Matrix3d r = p2.rotation * p1.rotation.transpose();
    const Eigen::Vector3d t = (p2.translation - r * p1.translation).normalized();
    const Eigen::Matrix3d e = testing::Skew(t) * r;
    for (const Correspondence& c : pm.matches) {
      const Eigen::Vector3d u1 = testing::OracleBearing(c.px_a.c, c.px_a.r, 640, 320);
      const Eigen::Vector3d u2 = testing::OracleBearing(c.px_b.c, c.px_b.r, 640, 320);
      worst = std::max(worst, std::abs(u2.dot(e * u1)));
      EXPECT_EQ(c.confidence, 1.0);
    }
  }
  for (size_t i = 0; i < scene.poses.size(); ++i) {
    for (size_t j = 0; j < scene.points.size(); ++j) {
      const ErpPoint& px = sm.observations[i][j];
      const Eigen::Vector3d u = testing::OracleBearing(px.c, px.r, 640, 320);
      worst_reproj =
          std::max(worst_reproj, testing::Angle(u, testing::Bearing(scene.poses[i], scene.points[j])));
    }
  }
  EXPECT_LT(worst, 1e-12);
  EXPECT_LT(worst_reproj, 1e-12);
}

TEST(Observe, OutlierCountIsExactFloor) {
  SceneSpec spec;
  spec.n_cams = 3;
  spec.n_points = 1000;
  const GroundTruthScene scene = GenerateScene(spec);
  for (double frac : {0.1, 0.25, 0.333}) {
    const SyntheticMatches sm = Observe(scene, {{640, 320}, 0.0, frac, 7});
    for (size_t p = 0; p < sm.pairs.size(); ++p) {
      const size_t n = sm.pairs[p].matches.size();
      ASSERT_EQ(n, 1000u);
      const auto outliers = std::count(sm.labels[p].begin(), sm.labels[p].end(), -1);
      EXPECT_EQ(outliers, static_cast<long>(std::floor(frac * n)));
      for (size_t k = 0; k < n; ++k) {
        if (sm.labels[p][k] < 0) {
          EXPECT_LT(sm.pairs[p].matches[k].confidence, 1.0);
        } else {
          EXPECT_EQ(sm.pairs[p].matches[k].confidence, 1.0);
        }
      }
    }
  }
}

TEST(Observe, NoiseMagnitude) {
  const GroundTruthScene scene = GenerateScene(SceneSpec{});
  const SyntheticMatches sm = Observe(scene, {{640, 320}, 0.5, 0.0, -1});
  double sum = 0.0;
  int n = 0;
  for (size_t i = 0; i < scene.poses.size(); ++i) {
    for (size_t j = 0; j < scene.points.size(); ++j) {
      const ErpPoint& px = sm.observations[i][j];
      const Eigen::Vector3d u = testing::OracleBearing(px.c, px.r, 640, 320);
      sum += testing::Angle(u, testing::Bearing(scene.poses[i], scene.points[j]));
      ++n;
    }
  }
  const double mean = sum / n;
  const double nominal = 0.5 * 2.0 * kPi / 640.0;
  EXPECT_GT(mean, 0.8 * nominal);
  EXPECT_LT(mean, 1.2 * nominal);
}

TEST(Observe, DeterministicAndSeedSensitive) {
  SceneSpec spec;
  spec.n_cams = 4;
  spec.n_points = 100;
  const GroundTruthScene scene = GenerateScene(spec);
  const ObserveOptions opts{{640, 320}, 0.5, 0.2, 3};
  const SyntheticMatches a = Observe(scene, opts);
  const SyntheticMatches b = Observe(scene, opts);
  ASSERT_EQ(a.pairs.size(), b.pairs.size());
  for (size_t p = 0; p < a.pairs.size(); ++p) {
    ASSERT_EQ(a.pairs[p].matches.size(), b.pairs[p].matches.size());
    for (size_t k = 0; k < a.pairs[p].matches.size(); ++k) {
      EXPECT_EQ(a.pairs[p].matches[k].px_a, b.pairs[p].matches[k].px_a);
      EXPECT_EQ(a.pairs[p].matches[k].px_b, b.pairs[p].matches[k].px_b);
    }
    EXPECT_EQ(a.labels[p], b.labels[p]);
  }
  ObserveOptions other = opts;
  other.seed = 4;
  EXPECT_FALSE(Observe(scene, other).observations[0][0] == a.observations[0][0]);
}

TEST(PerturbPoses, SigmaZeroAndGaugeCamera) {
  const GroundTruthScene scene = GenerateScene(SceneSpec{});
  const std::vector<Pose> same = PerturbPoses(scene, 0.0, 0.0, 1);
  for (size_t i = 0; i < scene.poses.size(); ++i) {
    EXPECT_TRUE(same[i].rotation.isApprox(scene.poses[i].rotation, 1e-15));
    EXPECT_LT((same[i].Center() - scene.poses[i].Center()).norm(), 1e-12);
  }
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const std::vector<Pose> moved = PerturbPoses(scene, 5.0, 0.1, seed);
    EXPECT_TRUE(moved[0].rotation == scene.poses[0].rotation);
    EXPECT_TRUE(moved[0].translation == scene.poses[0].translation);
    for (size_t i = 1; i < scene.poses.size(); ++i) {
      EXPECT_NEAR((moved[i].Center() - scene.poses[i].Center()).norm(),
                  0.1 * scene.room.Diameter(), 1e-9);
    }
  }
}

TEST(PerturbPoses, HalfNormalRotationMean) {
  SceneSpec spec;
  spec.n_cams = 101;
  spec.n_points = 8;
  const GroundTruthScene scene = GenerateScene(spec);
  const std::vector<Pose> moved = PerturbPoses(scene, 2.0, 0.0, 42);
  double sum = 0.0;
  for (size_t i = 1; i < moved.size(); ++i) {
    sum += testing::RotationAngleDeg(moved[i].rotation, scene.poses[i].rotation);
  }
  const double mean = sum / 100.0;
  EXPECT_GE(mean, 1.2);
  EXPECT_LE(mean, 2.0);
}

}  // namespace
}  // namespace omnisfm
