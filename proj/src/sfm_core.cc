#include "omnisfm/sfm_core.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <thread>

#include <Eigen/Eigenvalues>

#include "omnisfm/error.h"
#include "omnisfm/random.h"

namespace omnisfm {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;
const std::set<TrackId> kNoPoints;
}  // namespace

// ---------------------------------------------------------------------------
// Reconstruction

void Reconstruction::SetPose(ImageId image, const Pose& pose) {
  if (poses_.emplace(image, pose).second) {
    order_.push_back(image);
  } else {
    poses_[image] = pose;
  }
}

void Reconstruction::AddPoint(const Point3D& point,
                              const ObservationMap& observations) {
  if (observations.size() < 2) {
    throw DomainError("a point needs at least two observations");
  }
  points_[point.track] = point;
  for (const auto& [image, u] : observations) {
    AddObservation(image, point.track, u);
  }
}

void Reconstruction::RemovePoint(TrackId track) {
  const auto it = observations_.find(track);
  if (it != observations_.end()) {
    for (const auto& [image, u] : it->second) {
      image_points_[image].erase(track);
    }
    observations_.erase(it);
  }
  points_.erase(track);
}

void Reconstruction::AddObservation(ImageId image, TrackId track,
                                    const Eigen::Vector3d& u) {
  if (!IsRegistered(image)) {
    throw DomainError("observation in an unregistered image");
  }
  if (!HasPoint(track)) {
    throw DomainError("observation of a missing point");
  }
  observations_[track][image] = u;
  image_points_[image].insert(track);
}

void Reconstruction::RemoveObservation(ImageId image, TrackId track) {
  const auto it = observations_.find(track);
  if (it != observations_.end()) {
    it->second.erase(image);
  }
  const auto jt = image_points_.find(image);
  if (jt != image_points_.end()) {
    jt->second.erase(track);
  }
}

std::optional<Eigen::Vector3d> Reconstruction::Observation(ImageId image,
                                                           TrackId track) const {
  const auto it = observations_.find(track);
  if (it == observations_.end()) {
    return std::nullopt;
  }
  const auto jt = it->second.find(image);
  if (jt == it->second.end()) {
    return std::nullopt;
  }
  return jt->second;
}

const std::set<TrackId>& Reconstruction::ImagePoints(ImageId image) const {
  const auto it = image_points_.find(image);
  return it == image_points_.end() ? kNoPoints : it->second;
}

size_t Reconstruction::NumObservations() const {
  size_t n = 0;
  for (const auto& [track, obs] : observations_) {
    n += obs.size();
  }
  return n;
}

void Reconstruction::Rescale(double scale) {
  for (auto& [image, pose] : poses_) {
    pose.translation *= scale;
  }
  for (auto& [track, point] : points_) {
    point.position *= scale;
  }
}

// ---------------------------------------------------------------------------
// Triangulation

std::string ToString(TriangulationStatus status) {
  switch (status) {
    case TriangulationStatus::kAccepted: return "accepted";
    case TriangulationStatus::kTooFewViews: return "too few views";
    case TriangulationStatus::kLowParallax: return "low parallax";
    case TriangulationStatus::kNegativeDepth: return "negative depth";
    case TriangulationStatus::kLargeError: return "large reprojection error";
  }
  return "unknown";
}

TriangulationResult CheckPoint(const Eigen::Vector3d& position,
                               std::span<const PosedBearing> views,
                               const TriangulationOptions& options) {
  TriangulationResult result;
  result.position = position;
  if (views.size() < 2) {
    result.status = TriangulationStatus::kTooFewViews;
    return result;
  }
  bool negative_depth = false;
  double error_sum = 0.0;
  std::vector<Eigen::Vector3d> rays;
  rays.reserve(views.size());
  for (const PosedBearing& v : views) {
    const Eigen::Vector3d p = v.pose.Apply(position);
    if (!(p.dot(v.bearing) > 0.0)) {
      negative_depth = true;
    }
    const double err = p.norm() > kCenterEpsilon
                           ? AngularResidual(v.bearing, p.normalized())
                           : std::numbers::pi;
    result.max_error = std::max(result.max_error, err);
    error_sum += err;
    rays.push_back(position - v.pose.Center());
  }
  result.mean_error = error_sum / views.size();
  double max_angle = 0.0;
  for (size_t i = 0; i < rays.size(); ++i) {
    for (size_t j = i + 1; j < rays.size(); ++j) {
      max_angle = std::max(
          max_angle, std::atan2(rays[i].cross(rays[j]).norm(), rays[i].dot(rays[j])));
    }
  }
  result.max_angle_deg = max_angle * kRadToDeg;
  if (negative_depth) {
    result.status = TriangulationStatus::kNegativeDepth;
  } else if (result.max_angle_deg < options.min_angle_deg) {
    result.status = TriangulationStatus::kLowParallax;
  } else if (result.max_error > options.max_reproj) {
    result.status = TriangulationStatus::kLargeError;
  } else {
    result.status = TriangulationStatus::kAccepted;
  }
  return result;
}

TriangulationResult TriangulateTrack(std::span<const PosedBearing> views,
                                     const TriangulationOptions& options) {
  if (views.size() < 2) {
    return TriangulationResult{};
  }
  Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (const PosedBearing& v : views) {
    const Eigen::Matrix3d projector =
        Eigen::Matrix3d::Identity() - v.bearing * v.bearing.transpose();
    const Eigen::Matrix3d rt_p = v.pose.rotation.transpose() * projector;
    normal += rt_p * v.pose.rotation;
    rhs -= rt_p * v.pose.translation;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(normal);
  const Eigen::Vector3d ev = eig.eigenvalues();
  if (!(ev[0] > 1e-12 * std::max(ev[2], 1e-300))) {
    TriangulationResult result;
    result.status = TriangulationStatus::kLowParallax;
    return result;
  }
  const Eigen::Vector3d position = normal.ldlt().solve(rhs);
  return CheckPoint(position, views, options);
}

double MedianTriangulationAngle(const RelativeMotion& motion,
                                std::span<const BearingPair> inliers) {
  std::vector<double> angles;
  const Eigen::Vector3d c2 = -motion.rotation.transpose() * motion.translation;
  for (const BearingPair& p : inliers) {
    const auto depths = MidpointDepths(motion, p.u1, p.u2);
    if (!depths) {
      continue;
    }
    const Eigen::Vector3d x = MidpointPoint(motion, p.u1, p.u2, *depths);
    const Eigen::Vector3d r2 = x - c2;
    angles.push_back(std::atan2(x.cross(r2).norm(), x.dot(r2)));
  }
  if (angles.empty()) {
    return 0.0;
  }
  const size_t mid = angles.size() / 2;
  std::nth_element(angles.begin(), angles.begin() + mid, angles.end());
  return angles[mid];
}

std::vector<InitCandidate> RankInitPairs(std::span<const InitCandidate> candidates,
                                         double min_angle_deg) {
  const double min_angle = min_angle_deg * kDegToRad;
  std::vector<InitCandidate> ranked(candidates.begin(), candidates.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](const InitCandidate& a, const InitCandidate& b) {
                     const bool qa = a.median_angle >= min_angle;
                     const bool qb = b.median_angle >= min_angle;
                     if (qa != qb) {
                       return qa;
                     }
                     if (qa && a.num_inliers != b.num_inliers) {
                       return a.num_inliers > b.num_inliers;
                     }
                     if (!qa && a.median_angle != b.median_angle) {
                       return a.median_angle > b.median_angle;
                     }
                     return std::make_pair(a.image_a, a.image_b) <
                            std::make_pair(b.image_a, b.image_b);
                   });
  return ranked;
}

std::pair<ImageId, ImageId> SelectInitPair(std::span<const InitCandidate> candidates,
                                           double min_angle_deg) {
  if (candidates.empty()) {
    throw InsufficientDataError("cannot initialize: no verified pairs");
  }
  const InitCandidate best = RankInitPairs(candidates, min_angle_deg).front();
  return {best.image_a, best.image_b};
}

RegistrationResult RegisterImage(Reconstruction* recon, ImageId image,
                                 std::span<const BearingPointPair> corrs,
                                 const ResectionOptions& options) {
  const ResectionResult resection = EstimateAbsolutePose(corrs, options);
  RegistrationResult result;
  result.success = resection.success;
  result.pose = resection.pose;
  result.inlier_mask = resection.inlier_mask;
  result.num_inliers = resection.num_inliers;
  if (result.success) {
    recon->SetPose(image, resection.pose);
  }
  return result;
}

void SfmOptions::Check() const {
  resection.Check();
  two_view.Check();
  if (!(triangulation.min_angle_deg >= 0.0) || !(triangulation.max_reproj > 0.0) ||
      global_ba_every < 1 || local_ba_min_shared < 1 || !(robust_scale > 0.0) ||
      min_init_points < 2) {
    throw DomainError("invalid reconstruction options");
  }
}

// ---------------------------------------------------------------------------
// Audit

std::vector<std::string> AuditReconstruction(const Reconstruction& recon,
                                             const TriangulationOptions& options) {
  std::vector<std::string> problems;
  const auto& order = recon.RegistrationOrder();
  if (!order.empty()) {
    const Pose& first = recon.GetPose(order.front());
    if (first.rotation != Eigen::Matrix3d::Identity() ||
        first.translation != Eigen::Vector3d::Zero()) {
      problems.push_back("first registered pose is not the identity");
    }
  }
  for (const auto& [image, pose] : recon.Poses()) {
    if (!pose.IsValid(1e-9)) {
      problems.push_back("pose of image " + std::to_string(image) +
                         " is not a valid rigid transform");
    }
  }
  for (const auto& [track, point] : recon.Points()) {
    const auto& obs = recon.PointObservations(track);
    if (obs.size() < 2) {
      problems.push_back("point " + std::to_string(track) +
                         " has fewer than two observations");
    }
    if (point.track != track) {
      problems.push_back("point " + std::to_string(track) + " has a wrong track id");
    }
    for (const auto& [image, u] : obs) {
      if (!recon.IsRegistered(image)) {
        problems.push_back("point " + std::to_string(track) +
                           " observed in unregistered image " + std::to_string(image));
        continue;
      }
      if (!recon.ImagePoints(image).count(track)) {
        problems.push_back("observation index out of sync for point " +
                           std::to_string(track));
      }
      const Eigen::Vector3d p = recon.GetPose(image).Apply(point.position);
      if (!(p.dot(u) > 0.0)) {
        problems.push_back("point " + std::to_string(track) +
                           " behind image " + std::to_string(image));
      } else if (AngularResidual(u, p.normalized()) > options.max_reproj + 1e-12) {
        problems.push_back("point " + std::to_string(track) +
                           " exceeds the reprojection gate in image " +
                           std::to_string(image));
      }
    }
    if (point.error > options.max_reproj + 1e-12) {
      problems.push_back("point " + std::to_string(track) + " error above threshold");
    }
  }
  for (const auto& [image, pose] : recon.Poses()) {
    for (const TrackId track : recon.ImagePoints(image)) {
      if (!recon.HasPoint(track) || !recon.Observation(image, track)) {
        problems.push_back("image " + std::to_string(image) +
                           " references a missing observation");
      }
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Pair verification

std::vector<PairVerification> VerifyPairs(
    const std::vector<ImageInfo>& images,
    const std::vector<QuantizedPairMatches>& pairs,
    const RansacOptions& options, int threads) {
  std::vector<PairVerification> out(pairs.size());
  const auto verify = [&](size_t index) {
    const QuantizedPairMatches& pm = pairs[index];
    const ErpDims& dims_a = images.at(pm.image_a).dims;
    const ErpDims& dims_b = images.at(pm.image_b).dims;
    std::vector<BearingPair> bearings;
    bearings.reserve(pm.matches.size());
    for (const QuantizedMatch& m : pm.matches) {
      bearings.push_back({PixelToBearing(m.source.px_a, dims_a),
                          PixelToBearing(m.source.px_b, dims_b)});
    }
    if (bearings.size() < 8) {
      out[index].status = TwoViewStatus::kTooFewInliers;
      return;
    }
    RansacOptions pair_options = options;
    pair_options.seed = Mix64(options.seed + index);
    TwoViewResult result = RansacTwoView(bearings, pair_options);
    out[index].status = result.status;
    if (!result.ok()) {
      return;
    }
    VerifiedPair verified;
    verified.image_a = pm.image_a;
    verified.image_b = pm.image_b;
    for (size_t i = 0; i < bearings.size(); ++i) {
      if (result.geometry.inlier_mask[i]) {
        verified.inliers.push_back(bearings[i]);
      }
    }
    verified.geometry = std::move(result.geometry);
    out[index].verified = std::move(verified);
  };

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(pairs.size())));
  if (workers == 1) {
    for (size_t i = 0; i < pairs.size(); ++i) {
      verify(i);
    }
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (size_t i = w; i < pairs.size(); i += workers) {
          verify(i);
        }
      });
    }
    for (std::thread& t : pool) {
      t.join();
    }
  }
  return out;
}

QuantizedPairMatches InlierMatches(const QuantizedPairMatches& pm,
                                   const VerifiedPair& verified) {
  QuantizedPairMatches out;
  out.image_a = pm.image_a;
  out.image_b = pm.image_b;
  out.grid_size = pm.grid_size;
  const std::vector<bool>& mask = verified.geometry.inlier_mask;
  for (size_t i = 0; i < pm.matches.size() && i < mask.size(); ++i) {
    if (mask[i]) {
      out.matches.push_back(pm.matches[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Incremental mapper

namespace {

class ScopedTimer {
 public:
  ScopedTimer(std::map<std::string, double>* sink, std::string key)
      : sink_(sink), key_(std::move(key)), start_(std::chrono::steady_clock::now()) {}
  ~ScopedTimer() {
    (*sink_)[key_] += std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start_)
                          .count();
  }

 private:
  std::map<std::string, double>* sink_;
  std::string key_;
  std::chrono::steady_clock::time_point start_;
};

class IncrementalMapper {
 public:
  IncrementalMapper(const std::vector<ImageInfo>& images,
                    const std::vector<VerifiedPair>& pairs,
                    const std::vector<Track>& tracks, const SfmOptions& options)
      : images_(images), pairs_(pairs), options_(options) {
    track_bearings_.resize(tracks.size());
    for (size_t t = 0; t < tracks.size(); ++t) {
      for (const auto& [image, obs] : tracks[t].observations) {
        if (image < 0 || image >= static_cast<ImageId>(images.size())) {
          throw DomainError("track references an unknown image");
        }
        track_bearings_[t][image] = PixelToBearing(obs.coord, images[image].dims);
        image_tracks_[image].push_back(static_cast<TrackId>(t));
      }
    }
  }

  ReconstructionOutput Run() {
    ReconstructionOutput out;
    summary_ = &out.summary;
    FindLargestComponent();
    if (!Initialize()) {
      out.summary.success = false;
      if (out.summary.diagnostic.empty()) {
        out.summary.diagnostic = "initialization failed";
      }
      out.recon = Reconstruction();
      ListUnregistered();
      out.summary.unregistered = summary_->unregistered;
      return out;
    }
    Audit("initialization");

    int since_global = 0;
    std::set<ImageId> failed;
    while (true) {
      const std::optional<ImageId> next = RegisterNext(&failed);
      if (!next) {
        break;
      }
      failed.clear();
      Audit("registration");
      {
        ScopedTimer timer(&summary_->stage_seconds, "triangulation");
        TriangulateImage(*next);
      }
      Audit("triangulation");
      LocalBundleAdjust(*next);
      Audit("local bundle adjustment");
      if (++since_global >= options_.global_ba_every) {
        GlobalRefinement();
        since_global = 0;
        Audit("global bundle adjustment");
      }
    }
    GlobalRefinement();
    Audit("final global bundle adjustment");

    summary_->success = true;
    ListUnregistered();
    out.recon = std::move(recon_);
    return out;
  }

 private:
  void Audit(const std::string& stage) {
    if (!options_.audit_stages) {
      return;
    }
    const std::vector<std::string> problems =
        AuditReconstruction(recon_, options_.triangulation);
    if (!problems.empty()) {
      throw std::logic_error("audit failed after " + stage + ": " + problems.front());
    }
  }

  void FindLargestComponent() {
    std::vector<int> parent(images_.size());
    std::iota(parent.begin(), parent.end(), 0);
    const auto find = [&](int x) {
      while (parent[x] != x) {
        x = parent[x] = parent[parent[x]];
      }
      return x;
    };
    for (const VerifiedPair& p : pairs_) {
      const int a = find(p.image_a);
      const int b = find(p.image_b);
      if (a != b) {
        parent[std::max(a, b)] = std::min(a, b);
      }
    }
    std::map<int, std::set<ImageId>> components;
    std::set<ImageId> paired;
    for (const VerifiedPair& p : pairs_) {
      paired.insert(p.image_a);
      paired.insert(p.image_b);
    }
    for (const ImageId image : paired) {
      components[find(image)].insert(image);
    }
    size_t best = 0;
    for (const auto& [root, members] : components) {
      // Roots are the smallest member, so iteration order breaks ties.
      if (members.size() > best) {
        best = members.size();
        component_ = members;
      }
    }
  }

  bool Initialize() {
    ScopedTimer timer(&summary_->stage_seconds, "initialization");
    std::vector<InitCandidate> candidates;
    std::map<std::pair<ImageId, ImageId>, const VerifiedPair*> lookup;
    for (const VerifiedPair& p : pairs_) {
      if (!component_.count(p.image_a)) {
        continue;
      }
      const RelativeMotion motion{p.geometry.rotation, p.geometry.translation};
      candidates.push_back({p.image_a, p.image_b, p.geometry.num_inliers,
                            MedianTriangulationAngle(motion, p.inliers)});
      lookup[{p.image_a, p.image_b}] = &p;
    }
    if (candidates.empty()) {
      summary_->diagnostic = "cannot initialize: no verified pairs";
      return false;
    }
    for (const InitCandidate& c :
         RankInitPairs(candidates, options_.init_min_tri_angle_deg)) {
      const VerifiedPair& p = *lookup.at({c.image_a, c.image_b});
      recon_ = Reconstruction();
      recon_.SetPose(c.image_a, Pose::Identity());
      recon_.SetPose(c.image_b, Pose{p.geometry.rotation, p.geometry.translation});
      init_pair_ = {c.image_a, c.image_b};
      const Eigen::Vector3d t = p.geometry.translation;
      t.cwiseAbs().maxCoeff(&pinned_axis_);
      TriangulateImage(c.image_b);
      if (static_cast<int>(recon_.Points().size()) < options_.min_init_points) {
        continue;
      }
      GlobalBundleAdjust();
      Filter(nullptr);
      if (static_cast<int>(recon_.Points().size()) >= options_.min_init_points) {
        summary_->init_pair = init_pair_;
        return true;
      }
    }
    summary_->diagnostic = "cannot initialize: no candidate pair triangulates enough points";
    return false;
  }

  std::vector<PosedBearing> RegisteredViews(TrackId track,
                                            std::vector<ImageId>* ids) const {
    std::vector<PosedBearing> views;
    for (const auto& [image, u] : track_bearings_[track]) {
      if (recon_.IsRegistered(image)) {
        views.push_back({recon_.GetPose(image), u});
        ids->push_back(image);
      }
    }
    return views;
  }

  // Triangulates and, while the gates fail on error or depth, drops the
  // worst view and retries.
  bool TriangulateRobust(TrackId track) {
    std::vector<ImageId> ids;
    std::vector<PosedBearing> views = RegisteredViews(track, &ids);
    while (views.size() >= 2) {
      const TriangulationResult result =
          TriangulateTrack(views, options_.triangulation);
      if (result.ok()) {
        Reconstruction::ObservationMap obs;
        for (size_t i = 0; i < ids.size(); ++i) {
          obs[ids[i]] = views[i].bearing;
        }
        Point3D point;
        point.position = result.position;
        point.track = track;
        point.error = result.mean_error;
        recon_.AddPoint(point, obs);
        return true;
      }
      if ((result.status != TriangulationStatus::kLargeError &&
           result.status != TriangulationStatus::kNegativeDepth) ||
          views.size() <= 2) {
        return false;
      }
      size_t worst = 0;
      double worst_error = -1.0;
      for (size_t i = 0; i < views.size(); ++i) {
        const Eigen::Vector3d p = views[i].pose.Apply(result.position);
        const double err = p.dot(views[i].bearing) > 0.0
                               ? AngularResidual(views[i].bearing, p.normalized())
                               : std::numbers::pi;
        if (err > worst_error) {
          worst_error = err;
          worst = i;
        }
      }
      views.erase(views.begin() + worst);
      ids.erase(ids.begin() + worst);
    }
    return false;
  }

  int TriangulateImage(ImageId image) {
    int created = 0;
    const auto it = image_tracks_.find(image);
    if (it == image_tracks_.end()) {
      return 0;
    }
    for (const TrackId track : it->second) {
      if (!recon_.HasPoint(track) && TriangulateRobust(track)) {
        ++created;
      }
    }
    return created;
  }

  std::optional<ImageId> RegisterNext(std::set<ImageId>* failed) {
    ScopedTimer timer(&summary_->stage_seconds, "registration");
    std::vector<std::pair<int, ImageId>> candidates;
    for (const ImageId image : component_) {
      if (recon_.IsRegistered(image) || failed->count(image)) {
        continue;
      }
      int visible = 0;
      const auto it = image_tracks_.find(image);
      if (it != image_tracks_.end()) {
        for (const TrackId track : it->second) {
          visible += recon_.HasPoint(track) ? 1 : 0;
        }
      }
      if (visible >= 4) {
        candidates.emplace_back(-visible, image);
      }
    }
    std::sort(candidates.begin(), candidates.end());
    for (const auto& [neg_visible, image] : candidates) {
      std::vector<BearingPointPair> corrs;
      std::vector<TrackId> corr_tracks;
      for (const TrackId track : image_tracks_.at(image)) {
        if (recon_.HasPoint(track)) {
          corrs.push_back({track_bearings_[track].at(image),
                           recon_.GetPoint(track).position});
          corr_tracks.push_back(track);
        }
      }
      ResectionOptions resection = options_.resection;
      resection.seed = Mix64(options_.seed + 0x5eedULL * (image + 1) +
                             recon_.RegistrationOrder().size());
      const RegistrationResult result = RegisterImage(&recon_, image, corrs, resection);
      if (!result.success) {
        failed->insert(image);
        continue;
      }
      for (size_t i = 0; i < corr_tracks.size(); ++i) {
        if (result.inlier_mask[i]) {
          recon_.AddObservation(image, corr_tracks[i], corrs[i].bearing);
        }
      }
      return image;
    }
    return std::nullopt;
  }

  // Builds a problem over `free_points` with every observation of those
  // points; poses in `free_poses` are optimized, all others held fixed.
  void RunBundleAdjustment(const std::set<ImageId>& free_poses,
                           const std::set<TrackId>& free_points, bool robust) {
    BAProblem problem;
    problem.robustify = robust;
    problem.robust_scale = options_.robust_scale;
    std::map<ImageId, int> pose_index;
    std::vector<ImageId> pose_ids;
    std::vector<TrackId> point_ids;
    const ImageId gauge = recon_.RegistrationOrder().front();
    for (const TrackId track : free_points) {
      const int point_index = static_cast<int>(problem.points.size());
      problem.points.push_back({recon_.GetPoint(track).position, false});
      point_ids.push_back(track);
      for (const auto& [image, u] : recon_.PointObservations(track)) {
        auto [it, inserted] = pose_index.emplace(image, static_cast<int>(problem.poses.size()));
        if (inserted) {
          PoseBlock block;
          block.pose = recon_.GetPose(image);
          const bool fixed = image == gauge || !free_poses.count(image);
          block.fix_rotation = block.fix_translation = fixed;
          if (image == init_pair_.second) {
            block.pinned_translation_axis = static_cast<int>(pinned_axis_);
          }
          problem.poses.push_back(block);
          pose_ids.push_back(image);
        }
        problem.residuals.push_back({it->second, point_index, u});
      }
    }
    if (problem.residuals.empty()) {
      return;
    }
    const bool has_gauge = std::any_of(problem.poses.begin(), problem.poses.end(),
                                       [](const PoseBlock& b) { return b.FullyFixed(); });
    if (!has_gauge) {
      // Hold the earliest registered pose in the problem.
      int earliest = 0;
      size_t earliest_rank = std::numeric_limits<size_t>::max();
      const auto& order = recon_.RegistrationOrder();
      for (size_t i = 0; i < pose_ids.size(); ++i) {
        const size_t rank = std::find(order.begin(), order.end(), pose_ids[i]) - order.begin();
        if (rank < earliest_rank) {
          earliest_rank = rank;
          earliest = static_cast<int>(i);
        }
      }
      problem.poses[earliest].fix_rotation = problem.poses[earliest].fix_translation = true;
    }
    Optimize(&problem, options_.ba);
    for (size_t i = 0; i < pose_ids.size(); ++i) {
      if (!problem.poses[i].FullyFixed()) {
        recon_.SetPose(pose_ids[i], problem.poses[i].pose);
      }
    }
    for (size_t j = 0; j < point_ids.size(); ++j) {
      recon_.MutablePoint(point_ids[j]).position = problem.points[j].position;
    }
  }

  void LocalBundleAdjust(ImageId image) {
    ScopedTimer timer(&summary_->stage_seconds, "local_ba");
    std::map<ImageId, int> shared;
    for (const TrackId track : recon_.ImagePoints(image)) {
      for (const auto& [other, u] : recon_.PointObservations(track)) {
        if (other != image) {
          ++shared[other];
        }
      }
    }
    std::set<ImageId> local = {image};
    for (const auto& [other, count] : shared) {
      if (count >= options_.local_ba_min_shared) {
        local.insert(other);
      }
    }
    std::set<TrackId> points;
    for (const ImageId i : local) {
      const auto& ip = recon_.ImagePoints(i);
      points.insert(ip.begin(), ip.end());
    }
    RunBundleAdjustment(local, points, /*robust=*/true);
    ++summary_->local_ba_runs;
    Filter(&points);
  }

  void GlobalBundleAdjust() {
    std::set<ImageId> all;
    for (const auto& [image, pose] : recon_.Poses()) {
      all.insert(image);
    }
    std::set<TrackId> points;
    for (const auto& [track, point] : recon_.Points()) {
      points.insert(track);
    }
    RunBundleAdjustment(all, points, /*robust=*/false);
    ++summary_->global_ba_runs;
    // Restore the unit baseline of the initial pair.
    const double baseline = (recon_.GetPose(init_pair_.second).Center() -
                             recon_.GetPose(init_pair_.first).Center())
                                .norm();
    if (baseline > 0.0 && std::isfinite(baseline)) {
      recon_.Rescale(1.0 / baseline);
    }
  }

  void GlobalRefinement() {
    {
      ScopedTimer timer(&summary_->stage_seconds, "global_ba");
      GlobalBundleAdjust();
    }
    ScopedTimer timer(&summary_->stage_seconds, "filter_retriangulate");
    Filter(nullptr);
    for (size_t t = 0; t < track_bearings_.size(); ++t) {
      const TrackId track = static_cast<TrackId>(t);
      if (recon_.HasPoint(track)) {
        continue;
      }
      int registered = 0;
      for (const auto& [image, u] : track_bearings_[t]) {
        registered += recon_.IsRegistered(image) ? 1 : 0;
      }
      if (registered >= 2 && TriangulateRobust(track)) {
        ++summary_->retriangulated;
      }
    }
  }

  // Drops observations failing the depth or reprojection gate, then points
  // left with fewer than two views or too little parallax. Refreshes the
  // stored mean error of survivors.
  void Filter(const std::set<TrackId>* subset) {
    std::vector<TrackId> tracks;
    if (subset != nullptr) {
      tracks.assign(subset->begin(), subset->end());
    } else {
      for (const auto& [track, point] : recon_.Points()) {
        tracks.push_back(track);
      }
    }
    for (const TrackId track : tracks) {
      if (!recon_.HasPoint(track)) {
        continue;
      }
      const Eigen::Vector3d x = recon_.GetPoint(track).position;
      std::vector<ImageId> bad;
      for (const auto& [image, u] : recon_.PointObservations(track)) {
        const Eigen::Vector3d p = recon_.GetPose(image).Apply(x);
        if (!(p.dot(u) > 0.0) ||
            AngularResidual(u, p.normalized()) > options_.triangulation.max_reproj) {
          bad.push_back(image);
        }
      }
      for (const ImageId image : bad) {
        recon_.RemoveObservation(image, track);
        ++summary_->filtered_observations;
      }
      std::vector<PosedBearing> views;
      for (const auto& [image, u] : recon_.PointObservations(track)) {
        views.push_back({recon_.GetPose(image), u});
      }
      const TriangulationResult check = CheckPoint(x, views, options_.triangulation);
      if (!check.ok()) {
        recon_.RemovePoint(track);
        ++summary_->filtered_points;
      } else {
        recon_.MutablePoint(track).error = check.mean_error;
      }
    }
  }

  void ListUnregistered() {
    summary_->unregistered.clear();
    for (size_t i = 0; i < images_.size(); ++i) {
      if (!recon_.IsRegistered(static_cast<ImageId>(i))) {
        summary_->unregistered.push_back(static_cast<ImageId>(i));
      }
    }
  }

  const std::vector<ImageInfo>& images_;
  const std::vector<VerifiedPair>& pairs_;
  const SfmOptions& options_;
  std::vector<std::map<ImageId, Eigen::Vector3d>> track_bearings_;
  std::map<ImageId, std::vector<TrackId>> image_tracks_;
  std::set<ImageId> component_;
  Reconstruction recon_;
  std::pair<ImageId, ImageId> init_pair_{-1, -1};
  Eigen::Index pinned_axis_ = 0;
  ReconstructionSummary* summary_ = nullptr;
};

}  // namespace

ReconstructionOutput Reconstruct(const std::vector<ImageInfo>& images,
                                 const std::vector<VerifiedPair>& pairs,
                                 const std::vector<Track>& tracks,
                                 const SfmOptions& options) {
  options.Check();
  IncrementalMapper mapper(images, pairs, tracks, options);
  return mapper.Run();
}

}  // namespace omnisfm
