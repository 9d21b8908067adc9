#include "omnisfm/sphere_geom.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "omnisfm/error.h"

namespace omnisfm {

namespace {
constexpr double kPi = std::numbers::pi;
}

BearingVector::BearingVector(const Eigen::Vector3d& v) {
  const double norm = v.norm();
  if (!std::isfinite(norm) || std::abs(norm - 1.0) > 1e-6) {
    throw DomainError("bearing vector is not unit length");
  }
  v_ = v / norm;
}

BearingVector BearingVector::Normalize(const Eigen::Vector3d& v) {
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw DomainError("cannot normalize a zero or non-finite vector");
  }
  return BearingVector(v / norm, Trusted{});
}

void ErpDims::Check() const {
  if (width < 4 || width % 2 != 0 || width != 2 * height) {
    throw DomainError("ERP dims must satisfy width = 2 * height, width even >= 4 (got " +
                      std::to_string(width) + "x" + std::to_string(height) + ")");
  }
}

Pose Pose::FromQuaternion(const Eigen::Vector4d& wxyz,
                          const Eigen::Vector3d& translation) {
  Eigen::Quaterniond q(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
  if (!(q.norm() > 0.0)) {
    throw DomainError("zero quaternion");
  }
  q.normalize();
  return Pose{q.toRotationMatrix(), translation};
}

Eigen::Vector4d Pose::Quaternion() const {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  // Canonical sign: w >= 0 keeps written files stable.
  if (q.w() < 0.0) {
    q.coeffs() *= -1.0;
  }
  return Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
}

Pose Pose::Inverse() const {
  const Eigen::Matrix3d rt = rotation.transpose();
  return Pose{rt, -rt * translation};
}

bool Pose::IsValid(double tol) const {
  const double ortho =
      (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
          .cwiseAbs()
          .maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol &&
         translation.allFinite();
}

Pose RelativePose(const Pose& pose1, const Pose& pose2) {
  Pose rel;
  rel.rotation = pose2.rotation * pose1.rotation.transpose();
  rel.translation = pose2.translation - rel.rotation * pose1.translation;
  return rel;
}

Eigen::Matrix3d SkewSymmetric(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Matrix3d ExpSO3(const Eigen::Vector3d& omega) {
  const double angle = omega.norm();
  if (angle < 1e-12) {
    return Eigen::Matrix3d::Identity() + SkewSymmetric(omega);
  }
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

Eigen::Vector3d LogSO3(const Eigen::Matrix3d& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

double RotationAngle(const Eigen::Matrix3d& rotation) {
  // atan2 form stays accurate for tiny angles, unlike acos((tr - 1) / 2).
  const Eigen::Vector3d axis(rotation(2, 1) - rotation(1, 2),
                             rotation(0, 2) - rotation(2, 0),
                             rotation(1, 0) - rotation(0, 1));
  const double s = 0.5 * axis.norm();
  const double c = 0.5 * (rotation.trace() - 1.0);
  return std::atan2(s, c);
}

Eigen::Matrix3d Orthonormalize(const Eigen::Matrix3d& m) {
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

SphericalCoord PixelToSpherical(const ErpPoint& px, const ErpDims& dims) {
  dims.Check();
  if (!(px.c >= 0.0 && px.c <= dims.width && px.r >= 0.0 &&
        px.r <= dims.height)) {
    throw DomainError("ERP coordinate out of range");
  }
  return {2.0 * kPi * px.c / dims.width - kPi,
          kPi / 2.0 - kPi * px.r / dims.height};
}

BearingVector SphericalToBearing(const SphericalCoord& sc) {
  const double cp = std::cos(sc.phi);
  return BearingVector::Normalize(Eigen::Vector3d(
      std::sin(sc.theta) * cp, std::sin(sc.phi), std::cos(sc.theta) * cp));
}

SphericalCoord BearingToSpherical(const BearingVector& u) {
  const double horizontal = std::hypot(u.x(), u.z());
  SphericalCoord sc;
  sc.phi = std::atan2(u.y(), horizontal);
  sc.theta = (u.x() == 0.0 && u.z() == 0.0) ? -kPi : std::atan2(u.x(), u.z());
  return sc;
}

BearingVector PixelToBearing(const ErpPoint& px, const ErpDims& dims) {
  return SphericalToBearing(PixelToSpherical(px, dims));
}

ErpPoint BearingToPixel(const BearingVector& u, const ErpDims& dims) {
  dims.Check();
  const SphericalCoord sc = BearingToSpherical(u);
  double c = (sc.theta + kPi) * dims.width / (2.0 * kPi);
  if (c >= dims.width) {
    c -= dims.width;
  }
  if (c < 0.0) {
    c = 0.0;
  }
  const double r = (kPi / 2.0 - sc.phi) * dims.height / kPi;
  return {c, std::clamp(r, 0.0, static_cast<double>(dims.height))};
}

BearingVector ProjectPoint(const Eigen::Vector3d& point, const Pose& pose) {
  const Eigen::Vector3d p = pose.Apply(point);
  if (!(p.norm() > kCenterEpsilon)) {
    throw ProjectionUndefinedError("point coincides with the camera center");
  }
  return BearingVector::Normalize(p);
}

double AngularResidual(const Eigen::Vector3d& u_obs,
                       const Eigen::Vector3d& u_proj) {
  return std::atan2(u_obs.cross(u_proj).norm(), u_obs.dot(u_proj));
}

std::string CubeFaceName(CubeFace face) {
  switch (face) {
    case CubeFace::kFront: return "front";
    case CubeFace::kBack: return "back";
    case CubeFace::kLeft: return "left";
    case CubeFace::kRight: return "right";
    case CubeFace::kUp: return "up";
    case CubeFace::kDown: return "down";
  }
  return "unknown";
}

Pose CubeFacePose(CubeFace face) {
  // Rows are the face axes (right, up, forward) in panorama coordinates.
  // Face "right" follows increasing longitude so faces are not mirrored
  // relative to the ERP image.
  Eigen::Matrix3d r;
  switch (face) {
    case CubeFace::kFront:
      r << 1, 0, 0, 0, 1, 0, 0, 0, 1;
      break;
    case CubeFace::kRight:
      r << 0, 0, -1, 0, 1, 0, 1, 0, 0;
      break;
    case CubeFace::kBack:
      r << -1, 0, 0, 0, 1, 0, 0, 0, -1;
      break;
    case CubeFace::kLeft:
      r << 0, 0, 1, 0, 1, 0, -1, 0, 0;
      break;
    case CubeFace::kUp:
      r << 1, 0, 0, 0, 0, -1, 0, 1, 0;
      break;
    case CubeFace::kDown:
      r << 1, 0, 0, 0, 0, 1, 0, -1, 0;
      break;
  }
  return Pose{r, Eigen::Vector3d::Zero()};
}

void SampleErp(const Image& erp, const ErpPoint& px, float* out) {
  const int w = erp.width();
  const int h = erp.height();
  const double x = px.c - 0.5;
  const double y = std::clamp(px.r - 0.5, 0.0, static_cast<double>(h - 1));
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double ax = x - fx;
  const double ay = y - fy;
  const int x0 = ((static_cast<int>(fx) % w) + w) % w;
  const int x1 = (x0 + 1) % w;
  const int y0 = static_cast<int>(fy);
  const int y1 = std::min(y0 + 1, h - 1);
  for (int c = 0; c < erp.channels(); ++c) {
    const double top = (1.0 - ax) * erp.at(x0, y0, c) + ax * erp.at(x1, y0, c);
    const double bottom =
        (1.0 - ax) * erp.at(x0, y1, c) + ax * erp.at(x1, y1, c);
    out[c] = static_cast<float>((1.0 - ay) * top + ay * bottom);
  }
}

namespace {

void SampleClamped(const Image& image, double x, double y, float* out) {
  x = std::clamp(x - 0.5, 0.0, static_cast<double>(image.width() - 1));
  y = std::clamp(y - 0.5, 0.0, static_cast<double>(image.height() - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, image.width() - 1);
  const int y1 = std::min(y0 + 1, image.height() - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  for (int c = 0; c < image.channels(); ++c) {
    const double top =
        (1.0 - ax) * image.at(x0, y0, c) + ax * image.at(x1, y0, c);
    const double bottom =
        (1.0 - ax) * image.at(x0, y1, c) + ax * image.at(x1, y1, c);
    out[c] = static_cast<float>((1.0 - ay) * top + ay * bottom);
  }
}

}  // namespace

std::array<CubemapFace, 6> ErpToCubemap(const Image& erp, int face_size) {
  ErpDims{erp.width(), erp.height()}.Check();
  if (face_size < 2) {
    throw DomainError("cubemap face size must be >= 2");
  }
  const ErpDims dims{erp.width(), erp.height()};
  const double focal = 0.5 * face_size;
  std::array<CubemapFace, 6> faces;
  for (size_t f = 0; f < kAllCubeFaces.size(); ++f) {
    CubemapFace& face = faces[f];
    face.face_id = kAllCubeFaces[f];
    face.virtual_pose = CubeFacePose(face.face_id);
    face.image = Image(face_size, face_size, erp.channels());
    const Eigen::Matrix3d face_to_pano = face.virtual_pose.rotation.transpose();
    for (int y = 0; y < face_size; ++y) {
      for (int x = 0; x < face_size; ++x) {
        const Eigen::Vector3d ray_face((x + 0.5 - focal) / focal,
                                       -(y + 0.5 - focal) / focal, 1.0);
        const BearingVector ray =
            BearingVector::Normalize(face_to_pano * ray_face);
        SampleErp(erp, BearingToPixel(ray, dims), &face.image.at(x, y, 0));
      }
    }
  }
  return faces;
}

FaceHit RayToFace(const Eigen::Vector3d& ray, int face_size) {
  const Eigen::Vector3d a = ray.cwiseAbs();
  CubeFace face;
  if (a.x() >= a.y() && a.x() >= a.z()) {
    face = ray.x() > 0 ? CubeFace::kRight : CubeFace::kLeft;
  } else if (a.y() >= a.z()) {
    face = ray.y() > 0 ? CubeFace::kUp : CubeFace::kDown;
  } else {
    face = ray.z() > 0 ? CubeFace::kFront : CubeFace::kBack;
  }
  const Eigen::Vector3d d = CubeFacePose(face).rotation * ray;
  const double focal = 0.5 * face_size;
  return {face, focal * d.x() / d.z() + focal, -focal * d.y() / d.z() + focal};
}

Image CubemapToErp(const std::array<CubemapFace, 6>& faces,
                   const ErpDims& dims) {
  dims.Check();
  const int face_size = faces[0].image.width();
  Image erp(dims.width, dims.height, faces[0].image.channels());
  for (int r = 0; r < dims.height; ++r) {
    for (int c = 0; c < dims.width; ++c) {
      const BearingVector u = PixelToBearing({c + 0.5, r + 0.5}, dims);
      const FaceHit hit = RayToFace(u, face_size);
      for (const CubemapFace& face : faces) {
        if (face.face_id == hit.face) {
          SampleClamped(face.image, hit.x, hit.y, &erp.at(c, r, 0));
          break;
        }
      }
    }
  }
  return erp;
}

}  // namespace omnisfm
