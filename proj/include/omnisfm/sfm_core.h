#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "omnisfm/absolute_pose.h"
#include "omnisfm/bundle_adjust.h"
#include "omnisfm/match_graph.h"
#include "omnisfm/sphere_geom.h"
#include "omnisfm/two_view.h"

namespace omnisfm {

struct ImageInfo {
  std::string name;
  ErpDims dims;
};

// A pair that passed two-view verification, with the inlier bearings
// (u1 in image_a, u2 in image_b) the geometry was estimated from.
struct VerifiedPair {
  ImageId image_a = -1;
  ImageId image_b = -1;
  TwoViewGeometry geometry;
  std::vector<BearingPair> inliers;
};

struct Point3D {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  TrackId track = -1;
  std::optional<std::array<uint8_t, 3>> color;
  double error = 0.0;  // mean angular reprojection error, radians
};

class Reconstruction {
 public:
  using ObservationMap = std::map<ImageId, Eigen::Vector3d>;

  bool IsRegistered(ImageId image) const { return poses_.count(image) > 0; }
  // Registers the image on first use.
  void SetPose(ImageId image, const Pose& pose);
  const Pose& GetPose(ImageId image) const { return poses_.at(image); }
  const std::map<ImageId, Pose>& Poses() const { return poses_; }
  const std::vector<ImageId>& RegistrationOrder() const { return order_; }

  bool HasPoint(TrackId track) const { return points_.count(track) > 0; }
  const Point3D& GetPoint(TrackId track) const { return points_.at(track); }
  Point3D& MutablePoint(TrackId track) { return points_.at(track); }
  const std::map<TrackId, Point3D>& Points() const { return points_; }

  void AddPoint(const Point3D& point, const ObservationMap& observations);
  void RemovePoint(TrackId track);
  void AddObservation(ImageId image, TrackId track, const Eigen::Vector3d& u);
  void RemoveObservation(ImageId image, TrackId track);
  const ObservationMap& PointObservations(TrackId track) const {
    return observations_.at(track);
  }
  std::optional<Eigen::Vector3d> Observation(ImageId image, TrackId track) const;
  const std::set<TrackId>& ImagePoints(ImageId image) const;
  size_t NumObservations() const;

  // Rescales translations and points by `scale`.
  void Rescale(double scale);

 private:
  std::map<ImageId, Pose> poses_;
  std::vector<ImageId> order_;
  std::map<TrackId, Point3D> points_;
  std::map<TrackId, ObservationMap> observations_;
  std::map<ImageId, std::set<TrackId>> image_points_;
};

struct TriangulationOptions {
  double min_angle_deg = 1.5;
  double max_reproj = 0.02;  // radians
};

enum class TriangulationStatus {
  kAccepted,
  kTooFewViews,
  kLowParallax,
  kNegativeDepth,
  kLargeError,
};
std::string ToString(TriangulationStatus status);

struct TriangulationResult {
  TriangulationStatus status = TriangulationStatus::kTooFewViews;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double max_angle_deg = 0.0;
  double max_error = 0.0;
  double mean_error = 0.0;
  bool ok() const { return status == TriangulationStatus::kAccepted; }
};

struct PosedBearing {
  Pose pose;
  Eigen::Vector3d bearing;
};

// Multiview midpoint: X minimizes sum |(I - u u^T)(R X + t)|^2, solved as a
// 3x3 linear system, then gated on triangulation angle, depth and
// reprojection error.
TriangulationResult TriangulateTrack(std::span<const PosedBearing> views,
                                     const TriangulationOptions& options);

// Re-applies the triangulation gates to a fixed position.
TriangulationResult CheckPoint(const Eigen::Vector3d& position,
                               std::span<const PosedBearing> views,
                               const TriangulationOptions& options);

// Median over inliers of the angle between the two rays at the midpoint
// triangulation, radians. Pairs that do not triangulate are skipped.
double MedianTriangulationAngle(const RelativeMotion& motion,
                                std::span<const BearingPair> inliers);

struct InitCandidate {
  ImageId image_a = -1;
  ImageId image_b = -1;
  int num_inliers = 0;
  double median_angle = 0.0;  // radians
};

// Maximum inlier count among candidates with median angle >= min_angle;
// otherwise the largest median angle. Ties go to the smaller pair. Throws
// InsufficientDataError for an empty list.
std::pair<ImageId, ImageId> SelectInitPair(std::span<const InitCandidate> candidates,
                                           double min_angle_deg = 2.0);
// Full ranking in the same order, used to fall back to the next pair.
std::vector<InitCandidate> RankInitPairs(std::span<const InitCandidate> candidates,
                                         double min_angle_deg = 2.0);

struct RegistrationResult {
  bool success = false;
  Pose pose;
  std::vector<bool> inlier_mask;
  int num_inliers = 0;
};

// Resection of `image` from bearing/point correspondences; on success the
// pose is stored in `recon`. Throws InsufficientDataError with fewer than 4
// correspondences.
RegistrationResult RegisterImage(Reconstruction* recon, ImageId image,
                                 std::span<const BearingPointPair> corrs,
                                 const ResectionOptions& options);

struct SfmOptions {
  double init_min_tri_angle_deg = 2.0;
  int min_init_points = 12;
  TriangulationOptions triangulation;
  ResectionOptions resection;
  RansacOptions two_view;
  int local_ba_min_shared = 20;
  int global_ba_every = 5;
  double robust_scale = 0.02;
  BAOptions ba;
  uint64_t seed = 0;
  // Throw if the reconstruction audit fails after any stage.
  bool audit_stages = false;

  void Check() const;
};

struct ReconstructionSummary {
  bool success = false;
  std::string diagnostic;
  std::pair<ImageId, ImageId> init_pair{-1, -1};
  std::vector<ImageId> unregistered;
  int local_ba_runs = 0;
  int global_ba_runs = 0;
  int filtered_points = 0;
  int filtered_observations = 0;
  int retriangulated = 0;
  std::map<std::string, double> stage_seconds;
};

struct ReconstructionOutput {
  Reconstruction recon;
  ReconstructionSummary summary;
};

// Incremental reconstruction over the largest connected component of the
// verified pair graph.
ReconstructionOutput Reconstruct(const std::vector<ImageInfo>& images,
                                 const std::vector<VerifiedPair>& pairs,
                                 const std::vector<Track>& tracks,
                                 const SfmOptions& options);

// Referential integrity, gauge, pose validity, positive depth and error
// bounds. Returns one message per violation.
std::vector<std::string> AuditReconstruction(const Reconstruction& recon,
                                             const TriangulationOptions& options);

struct PairVerification {
  TwoViewStatus status = TwoViewStatus::kTooFewInliers;
  std::optional<VerifiedPair> verified;
};

// Two-view verification of every pair, aligned with the input. Bearings come
// from the representative match coordinates. Each pair draws from its own
// seed stream, so results do not depend on `threads`.
std::vector<PairVerification> VerifyPairs(
    const std::vector<ImageInfo>& images,
    const std::vector<QuantizedPairMatches>& pairs,
    const RansacOptions& options, int threads = 1);

// Keeps only the matches marked as inliers by the verified geometry.
QuantizedPairMatches InlierMatches(const QuantizedPairMatches& pm,
                                   const VerifiedPair& verified);

}  // namespace omnisfm
