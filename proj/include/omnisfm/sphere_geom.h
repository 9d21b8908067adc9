#pragma once

#include <array>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "omnisfm/image.h"

namespace omnisfm {

// Unit direction on S^2. The stored vector is normalized at construction.
class BearingVector {
 public:
  BearingVector() : v_(0.0, 0.0, 1.0) {}
  BearingVector(double x, double y, double z)
      : BearingVector(Eigen::Vector3d(x, y, z)) {}
  // Throws DomainError unless |v| = 1 within 1e-6.
  explicit BearingVector(const Eigen::Vector3d& v);

  // Normalizes any nonzero vector; throws DomainError on zero input.
  static BearingVector Normalize(const Eigen::Vector3d& v);

  const Eigen::Vector3d& vec() const { return v_; }
  operator const Eigen::Vector3d&() const { return v_; }
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }

 private:
  struct Trusted {};
  BearingVector(const Eigen::Vector3d& v, Trusted) : v_(v) {}

  Eigen::Vector3d v_;
};

// Longitude theta in [-pi, pi], latitude phi in [-pi/2, pi/2].
struct SphericalCoord {
  double theta = 0.0;
  double phi = 0.0;
};

// Full 360x180 equirectangular raster size.
struct ErpDims {
  int width = 0;
  int height = 0;

  // Throws DomainError unless width is even, >= 4 and equal to 2 * height.
  void Check() const;
  bool operator==(const ErpDims&) const = default;
};

// Continuous ERP coordinates: column c in [0, W], row r in [0, H]. Integer
// pixel i covers [i, i + 1) and has its center at i + 0.5. Row 0 is the top.
struct ErpPoint {
  double c = 0.0;
  double r = 0.0;
  bool operator==(const ErpPoint&) const = default;
};

// World-to-camera rigid transform: x_cam = rotation * x_world + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose Identity() { return {}; }
  // Unit quaternion (w, x, y, z); normalized before use.
  static Pose FromQuaternion(const Eigen::Vector4d& wxyz,
                             const Eigen::Vector3d& translation);
  Eigen::Vector4d Quaternion() const;

  Eigen::Vector3d Center() const { return -rotation.transpose() * translation; }
  Eigen::Vector3d Apply(const Eigen::Vector3d& x) const {
    return rotation * x + translation;
  }
  Pose Inverse() const;

  // R^T R = I and det R = +1 within `tol`.
  bool IsValid(double tol = 1e-9) const;
};

// Relative transform mapping camera-1 coordinates to camera-2 coordinates:
// R_rel = R2 R1^T, t_rel = t2 - R_rel t1.
Pose RelativePose(const Pose& pose1, const Pose& pose2);

Eigen::Matrix3d SkewSymmetric(const Eigen::Vector3d& v);
// Rodrigues exponential and its inverse on SO(3).
Eigen::Matrix3d ExpSO3(const Eigen::Vector3d& omega);
Eigen::Vector3d LogSO3(const Eigen::Matrix3d& rotation);
// Geodesic angle of a rotation matrix, radians in [0, pi].
double RotationAngle(const Eigen::Matrix3d& rotation);
// Nearest rotation in the Frobenius sense.
Eigen::Matrix3d Orthonormalize(const Eigen::Matrix3d& m);

SphericalCoord PixelToSpherical(const ErpPoint& px, const ErpDims& dims);
BearingVector SphericalToBearing(const SphericalCoord& sc);
SphericalCoord BearingToSpherical(const BearingVector& u);

// u = (sin(theta) cos(phi), sin(phi), cos(theta) cos(phi)) with
// theta = 2 pi c / W - pi and phi = pi / 2 - pi r / H.
BearingVector PixelToBearing(const ErpPoint& px, const ErpDims& dims);
// Inverse of PixelToBearing. Returns c in [0, W); c = 0 at the poles.
ErpPoint BearingToPixel(const BearingVector& u, const ErpDims& dims);

// Spherical projection of a world point: normalize(R X + t).
inline constexpr double kCenterEpsilon = 1e-9;
BearingVector ProjectPoint(const Eigen::Vector3d& point, const Pose& pose);

// Angle between two unit vectors, radians in [0, pi].
double AngularResidual(const Eigen::Vector3d& u_obs,
                       const Eigen::Vector3d& u_proj);

enum class CubeFace { kFront = 0, kBack, kLeft, kRight, kUp, kDown };
inline constexpr std::array<CubeFace, 6> kAllCubeFaces = {
    CubeFace::kFront, CubeFace::kBack, CubeFace::kLeft,
    CubeFace::kRight, CubeFace::kUp,   CubeFace::kDown};
std::string CubeFaceName(CubeFace face);

// Panorama-to-face rotation of the 90 degree pinhole looking along the
// face axis (front +z, back -z, left -x, right +x, up +y, down -y).
Pose CubeFacePose(CubeFace face);

struct CubemapFace {
  CubeFace face_id = CubeFace::kFront;
  Image image;
  Pose virtual_pose;
};

// Bilinear sample at continuous ERP coordinates with longitude wraparound
// and row clamping.
void SampleErp(const Image& erp, const ErpPoint& px, float* out);

std::array<CubemapFace, 6> ErpToCubemap(const Image& erp, int face_size);
// Inverse resampling; `dims` selects the output ERP size.
Image CubemapToErp(const std::array<CubemapFace, 6>& faces,
                   const ErpDims& dims);

// Face that a panorama-frame ray hits, with its continuous face-pixel
// coordinates (x right, y down, origin at the face corner).
struct FaceHit {
  CubeFace face;
  double x;
  double y;
};
FaceHit RayToFace(const Eigen::Vector3d& ray, int face_size);

}  // namespace omnisfm
