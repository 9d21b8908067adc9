#include "omnisfm/sphere_geom.h"

#include <gtest/gtest.h>

#include "omnisfm/error.h"
#include "omnisfm/image.h"
#include "test_util.h"

namespace omnisfm {
namespace {

using testing::kPi;

const ErpDims kDims{640, 320};

void ExpectVec(const Eigen::Vector3d& got, const Eigen::Vector3d& want, double tol) {
  EXPECT_LT((got - want).norm(), tol) << got.transpose() << " vs " << want.transpose();
}

TEST(PixelToBearing, Examples) {
  ExpectVec(PixelToBearing({320.0, 160.0}, kDims), {0, 0, 1}, 1e-15);
  ExpectVec(PixelToBearing({480.0, 160.0}, kDims), {1, 0, 0}, 1e-15);
  ExpectVec(PixelToBearing({100.0, 0.0}, kDims), {0, 1, 0}, 1e-15);
}

TEST(PixelToBearing, RejectsOutOfRange) {
  EXPECT_THROW(PixelToBearing({-0.1, 10.0}, kDims), DomainError);
  EXPECT_THROW(PixelToBearing({640.5, 10.0}, kDims), DomainError);
  EXPECT_THROW(PixelToBearing({10.0, 320.01}, kDims), DomainError);
  EXPECT_NO_THROW(PixelToBearing({640.0, 320.0}, kDims));
}

TEST(PixelToBearing, MatchesFormula) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> uc(0.0, 640.0), ur(0.0, 320.0);
  for (int i = 0; i < 1000; ++i) {
    const double c = uc(rng), r = ur(rng);
    ExpectVec(PixelToBearing({c, r}, kDims), testing::OracleBearing(c, r, 640, 320), 1e-12);
  }
}

TEST(BearingToPixel, Examples) {
  EXPECT_EQ(BearingToPixel(BearingVector(0, 0, 1), kDims), (ErpPoint{320.0, 160.0}));
  EXPECT_EQ(BearingToPixel(BearingVector(0, 0, -1), kDims), (ErpPoint{0.0, 160.0}));
  EXPECT_EQ(BearingToPixel(BearingVector(0, 1, 0), kDims), (ErpPoint{0.0, 0.0}));
}

TEST(BearingToPixel, RejectsNonUnit) {
  EXPECT_THROW(BearingVector(0, 0, 1.001), DomainError);
  EXPECT_THROW(BearingVector::Normalize(Eigen::Vector3d::Zero()), DomainError);
}

TEST(BearingToPixel, RoundTripAwayFromPoles) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> uc(0.0, 640.0);
  // |phi| < pi/2 - 1e-3 corresponds to rows within this margin.
  const double margin = 1e-3 * 320 / kPi;
  std::uniform_real_distribution<double> ur(margin, 320.0 - margin);
  for (int i = 0; i < 100000; ++i) {
    const ErpPoint px{uc(rng), ur(rng)};
    const ErpPoint back = BearingToPixel(PixelToBearing(px, kDims), kDims);
    double dc = std::abs(back.c - px.c);
    dc = std::min(dc, 640.0 - dc);
    ASSERT_LT(dc, 1e-6);
    ASSERT_LT(std::abs(back.r - px.r), 1e-6);
    ASSERT_GE(back.c, 0.0);
    ASSERT_LT(back.c, 640.0);
  }
}

TEST(BearingToPixel, MatchesFormula) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d u = testing::RandomUnit(rng);
    const ErpPoint p = BearingToPixel(BearingVector(u), kDims);
    const Eigen::Vector2d want = testing::OraclePixel(u, 640, 320);
    EXPECT_NEAR(p.c, want.x(), 1e-9);
    EXPECT_NEAR(p.r, want.y(), 1e-9);
  }
}

TEST(BearingVector, UnitNorm) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uc(0.0, 640.0), ur(0.0, 320.0);
  for (int i = 0; i < 10000; ++i) {
    EXPECT_NEAR(PixelToBearing({uc(rng), ur(rng)}, kDims).vec().norm(), 1.0, 1e-9);
    const Eigen::Vector3d v = 100.0 * testing::RandomUnit(rng);
    EXPECT_NEAR(BearingVector::Normalize(v).vec().norm(), 1.0, 1e-9);
  }
}

TEST(ErpDims, Check) {
  EXPECT_NO_THROW((ErpDims{640, 320}.Check()));
  EXPECT_THROW((ErpDims{640, 300}.Check()), DomainError);
  EXPECT_THROW((ErpDims{0, 0}.Check()), DomainError);
  EXPECT_THROW((ErpDims{3, 1}.Check()), DomainError);
}

TEST(ProjectPoint, Examples) {
  ExpectVec(ProjectPoint({0, 0, 5}, Pose::Identity()), {0, 0, 1}, 1e-15);
  ExpectVec(ProjectPoint({2, 0, 0}, Pose{Eigen::Matrix3d::Identity(), {-1, 0, 0}}),
            {1, 0, 0}, 1e-15);
  const Pose pose{testing::AxisAngle({1, 2, 3}, 0.7), {0.5, -1.0, 2.0}};
  EXPECT_THROW(ProjectPoint(pose.Center(), pose), ProjectionUndefinedError);
}

TEST(ProjectPoint, ScaleInvariantInDepth) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> k(0.01, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d xc = 3.0 * testing::RandomUnit(rng);
    const double s = k(rng);
    // Identity pose: world point equals camera-frame point.
    ExpectVec(ProjectPoint(s * xc, Pose::Identity()), ProjectPoint(xc, Pose::Identity()),
              1e-15);
  }
}

TEST(AngularResidual, Examples) {
  EXPECT_EQ(AngularResidual({0, 0, 1}, {0, 0, 1}), 0.0);
  EXPECT_NEAR(AngularResidual({0, 0, 1}, {1, 0, 0}), kPi / 2, 1e-15);
  EXPECT_NEAR(AngularResidual({0, 0, 1}, {0, 0, -1}), kPi, 1e-15);
}

TEST(AngularResidual, SymmetricAndTriangleInequality) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Vector3d a = testing::RandomUnit(rng);
    const Eigen::Vector3d b = testing::RandomUnit(rng);
    const Eigen::Vector3d c = testing::RandomUnit(rng);
    EXPECT_EQ(AngularResidual(a, b), AngularResidual(b, a));
    EXPECT_LE(AngularResidual(a, c), AngularResidual(a, b) + AngularResidual(b, c) + 1e-12);
    EXPECT_NEAR(AngularResidual(a, b), testing::Angle(a, b), 1e-12);
  }
}

TEST(Pose, QuaternionRoundTrip) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const Pose p{testing::RandomRotation(rng), testing::RandomUnit(rng)};
    const Eigen::Vector4d q = p.Quaternion();
    EXPECT_GE(q[0], 0.0);
    EXPECT_NEAR(q.norm(), 1.0, 1e-12);
    const Pose back = Pose::FromQuaternion(q, p.translation);
    EXPECT_LT((back.rotation - p.rotation).norm(), 1e-12);
    EXPECT_TRUE(back.IsValid());
  }
}

TEST(Pose, RelativePoseConvention) {
  std::mt19937_64 rng(8);
  const Pose p1{testing::RandomRotation(rng), testing::RandomUnit(rng)};
  const Pose p2{testing::RandomRotation(rng), testing::RandomUnit(rng)};
  const Pose rel = RelativePose(p1, p2);
  const Eigen::Vector3d x(0.3, -0.2, 1.7);
  // x2 = R_rel x1 + t_rel.
  ExpectVec(rel.Apply(p1.Apply(x)), p2.Apply(x), 1e-12);
  EXPECT_LT((rel.rotation - p2.rotation * p1.rotation.transpose()).norm(), 1e-15);
}

TEST(SO3, ExpLogRoundTrip) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> angle(0.0, kPi - 1e-3);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d w = angle(rng) * testing::RandomUnit(rng);
    const Eigen::Matrix3d r = ExpSO3(w);
    EXPECT_LT((r - testing::AxisAngle(w, w.norm())).norm(), 1e-12);
    EXPECT_LT((LogSO3(r) - w).norm(), 1e-9);
    EXPECT_NEAR(RotationAngle(r), w.norm(), 1e-12);
  }
  EXPECT_EQ(ExpSO3(Eigen::Vector3d::Zero()), Eigen::Matrix3d::Identity());
}

TEST(SkewSymmetric, CrossProduct) {
  const Eigen::Vector3d a(1, 2, 3), b(-4, 0.5, 2);
  ExpectVec(SkewSymmetric(a) * b, a.cross(b), 1e-15);
}

// Smooth function of direction: continuous across seams and poles.
double SmoothField(const Eigen::Vector3d& u, int channel) {
  return 0.5 + 0.2 * u.x() * u.z() + 0.15 * u.y() + 0.1 * std::sin(2.0 * u.x() + channel) *
                                                        std::cos(u.z());
}

Image RenderField(int width, int height) {
  Image img(width, height, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector3d u = testing::OracleBearing(x + 0.5, y + 0.5, width, height);
      for (int c = 0; c < 3; ++c) {
        img.at(x, y, c) = static_cast<float>(SmoothField(u, c));
      }
    }
  }
  return img;
}

TEST(Cubemap, SixSquareFaces) {
  const Image erp = RenderField(128, 64);
  const auto faces = ErpToCubemap(erp, 33);
  ASSERT_EQ(faces.size(), 6u);
  for (size_t i = 0; i < faces.size(); ++i) {
    EXPECT_EQ(faces[i].image.width(), 33);
    EXPECT_EQ(faces[i].image.height(), 33);
    EXPECT_EQ(faces[i].face_id, kAllCubeFaces[i]);
  }
}

TEST(Cubemap, RejectsBadDims) {
  EXPECT_THROW(ErpToCubemap(Image(100, 60, 3), 16), DomainError);
  EXPECT_THROW(ErpToCubemap(RenderField(64, 32), 1), DomainError);
}

TEST(Cubemap, FrontCenterSamplesErpCenter) {
  Image erp(64, 32, 1);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<float> v(0.0f, 1.0f);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 64; ++x) {
      erp.at(x, y, 0) = v(rng);
    }
  }
  const auto faces = ErpToCubemap(erp, 17);
  // Bilinear sample at (W/2, H/2): average of the four surrounding pixels.
  const float want = 0.25f * (erp.at(31, 15, 0) + erp.at(32, 15, 0) + erp.at(31, 16, 0) +
                              erp.at(32, 16, 0));
  EXPECT_NEAR(faces[0].image.at(8, 8, 0), want, 1e-6);
}

TEST(Cubemap, VirtualPosesAreAxisAligned) {
  const Eigen::Vector3d axes[] = {{0, 0, 1}, {0, 0, -1}, {-1, 0, 0},
                                  {1, 0, 0}, {0, 1, 0},  {0, -1, 0}};
  for (size_t i = 0; i < kAllCubeFaces.size(); ++i) {
    const Pose p = CubeFacePose(kAllCubeFaces[i]);
    EXPECT_TRUE(p.IsValid(1e-12));
    EXPECT_EQ(p.translation, Eigen::Vector3d::Zero());
    // The face's optical axis maps onto the panorama axis it looks along.
    ExpectVec(p.rotation * axes[i], {0, 0, 1}, 1e-15);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::abs(p.rotation(r, c));
        EXPECT_TRUE(v == 0.0 || v == 1.0);
      }
    }
  }
}

TEST(Cubemap, RayToFaceHitsCenters) {
  const Eigen::Vector3d axes[] = {{0, 0, 1}, {0, 0, -1}, {-1, 0, 0},
                                  {1, 0, 0}, {0, 1, 0},  {0, -1, 0}};
  for (size_t i = 0; i < kAllCubeFaces.size(); ++i) {
    const FaceHit hit = RayToFace(axes[i], 64);
    EXPECT_EQ(hit.face, kAllCubeFaces[i]);
    EXPECT_NEAR(hit.x, 32.0, 1e-12);
    EXPECT_NEAR(hit.y, 32.0, 1e-12);
  }
}

// Mask excluding 2-px bands at the poles and around every face border.
std::vector<bool> SeamMask(int width, int height, int face_size) {
  std::vector<bool> mask(static_cast<size_t>(width) * height, false);
  const double band = 2.0 / (face_size / 2.0);
  for (int y = 2; y < height - 2; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector3d u = testing::OracleBearing(x + 0.5, y + 0.5, width, height);
      int axis = 0;
      u.cwiseAbs().maxCoeff(&axis);
      bool keep = true;
      for (int k = 0; k < 3; ++k) {
        if (k != axis && std::abs(u[k] / u[axis]) > 1.0 - band) {
          keep = false;
        }
      }
      mask[static_cast<size_t>(y) * width + x] = keep;
    }
  }
  return mask;
}

TEST(Cubemap, RoundTripPsnr) {
  const Image erp = RenderField(1024, 512);
  const auto faces = ErpToCubemap(erp, 256);
  const Image back = CubemapToErp(faces, ErpDims{1024, 512});
  const double psnr = Psnr(erp, back, SeamMask(1024, 512, 256));
  EXPECT_GT(psnr, 40.0);
}

}  // namespace
}  // namespace omnisfm
