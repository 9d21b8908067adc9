#include "omnisfm/synth_oracle.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "omnisfm/error.h"
#include "omnisfm/random.h"

namespace omnisfm {

namespace {

// Stream ids; per-entity streams are offset by the entity index.
constexpr uint64_t kCameraStream = 1ULL << 20;
constexpr uint64_t kPointStream = 2ULL << 20;
constexpr uint64_t kNoiseStream = 3ULL << 20;
constexpr uint64_t kOutlierStream = 4ULL << 20;
constexpr uint64_t kPerturbStream = 5ULL << 20;

}  // namespace

GroundTruthScene GenerateScene(const SceneSpec& spec) {
  const RoomDims& room = spec.room;
  if (!(room.width > 0.0 && room.depth > 0.0 && room.height > 0.0) ||
      !std::isfinite(room.Diameter())) {
    throw DomainError("room dimensions must be positive");
  }
  if (spec.n_cams < 2 || spec.n_points < 8) {
    throw DomainError("scene needs n_cams >= 2 and n_points >= 8");
  }
  if (!(spec.camera_inset >= 0.0 && spec.camera_inset < 0.5)) {
    throw DomainError("camera inset must be in [0, 0.5)");
  }

  GroundTruthScene scene;
  scene.room = room;
  scene.seed = spec.seed;
  const Eigen::Vector3d half = room.HalfExtents();
  const Eigen::Vector3d cam_half = half * (1.0 - 2.0 * spec.camera_inset);

  for (int i = 0; i < spec.n_cams; ++i) {
    CounterRng rng(spec.seed, kCameraStream + i);
    const Eigen::Vector3d center(rng.Uniform(-cam_half.x(), cam_half.x()),
                                 rng.Uniform(-cam_half.y(), cam_half.y()),
                                 rng.Uniform(-cam_half.z(), cam_half.z()));
    Pose pose;
    pose.rotation = rng.Rotation();
    pose.translation = -pose.rotation * center;
    scene.poses.push_back(pose);
  }

  // Face areas: +-x faces are depth x height, +-y are width x depth, +-z
  // are width x height.
  const double area_x = room.depth * room.height;
  const double area_y = room.width * room.depth;
  const double area_z = room.width * room.height;
  const double total = 2.0 * (area_x + area_y + area_z);
  std::set<int> all_cams;
  for (int i = 0; i < spec.n_cams; ++i) {
    all_cams.insert(i);
  }
  for (int j = 0; j < spec.n_points; ++j) {
    CounterRng rng(spec.seed, kPointStream + j);
    double pick = rng.Uniform() * total;
    const double sign = rng.Uniform() < 0.5 ? -1.0 : 1.0;
    const double a = rng.Uniform(-1.0, 1.0);
    const double b = rng.Uniform(-1.0, 1.0);
    Eigen::Vector3d p;
    if ((pick -= 2.0 * area_x) < 0.0) {
      p = Eigen::Vector3d(sign * half.x(), a * half.y(), b * half.z());
    } else if ((pick -= 2.0 * area_y) < 0.0) {
      p = Eigen::Vector3d(a * half.x(), sign * half.y(), b * half.z());
    } else {
      p = Eigen::Vector3d(a * half.x(), b * half.y(), sign * half.z());
    }
    scene.points.push_back(p);
    scene.visibility.push_back(all_cams);
  }
  return scene;
}

SyntheticMatches Observe(const GroundTruthScene& scene,
                         const ObserveOptions& options) {
  options.dims.Check();
  if (!(options.noise_sigma >= 0.0) ||
      !(options.outlier_frac >= 0.0 && options.outlier_frac < 1.0)) {
    throw DomainError("invalid observation options");
  }
  const uint64_t seed =
      options.seed >= 0 ? static_cast<uint64_t>(options.seed) : scene.seed;
  const double w = options.dims.width;
  const double h = options.dims.height;
  const int n_cams = static_cast<int>(scene.poses.size());
  const int n_points = static_cast<int>(scene.points.size());

  SyntheticMatches out;
  out.observations.assign(n_cams, std::vector<ErpPoint>(n_points));
  for (int i = 0; i < n_cams; ++i) {
    for (int j = 0; j < n_points; ++j) {
      ErpPoint px = BearingToPixel(ProjectPoint(scene.points[j], scene.poses[i]),
                                   options.dims);
      if (options.noise_sigma > 0.0) {
        CounterRng rng(seed, kNoiseStream + static_cast<uint64_t>(i) * n_points + j);
        px.c += options.noise_sigma * rng.Normal();
        px.r += options.noise_sigma * rng.Normal();
        px.c = std::fmod(std::fmod(px.c, w) + w, w);
        px.r = std::clamp(px.r, 0.0, h);
      }
      out.observations[i][j] = px;
    }
  }

  int pair_index = 0;
  for (int a = 0; a < n_cams; ++a) {
    for (int b = a + 1; b < n_cams; ++b, ++pair_index) {
      PairMatches pm;
      pm.image_a = a;
      pm.image_b = b;
      std::vector<int> labels;
      for (int j = 0; j < n_points; ++j) {
        if (!scene.visibility[j].count(a) || !scene.visibility[j].count(b)) {
          continue;
        }
        pm.matches.push_back({out.observations[a][j], out.observations[b][j], 1.0});
        labels.push_back(j);
      }
      const int n = static_cast<int>(pm.matches.size());
      const int n_out = static_cast<int>(std::floor(options.outlier_frac * n));
      if (n_out > 0) {
        CounterRng rng(seed, kOutlierStream + pair_index);
        for (const int k : rng.Sample(n, n_out)) {
          pm.matches[k].px_a = {rng.Uniform(0.0, w), rng.Uniform(0.0, h)};
          pm.matches[k].px_b = {rng.Uniform(0.0, w), rng.Uniform(0.0, h)};
          pm.matches[k].confidence = rng.Uniform();
          labels[k] = -1;
        }
      }
      out.pairs.push_back(std::move(pm));
      out.labels.push_back(std::move(labels));
    }
  }
  return out;
}

std::vector<Pose> PerturbPoses(const GroundTruthScene& scene,
                               double rot_sigma_deg, double trans_frac,
                               uint64_t seed) {
  std::vector<Pose> poses = scene.poses;
  const double sigma = rot_sigma_deg * std::numbers::pi / 180.0;
  const double offset = trans_frac * scene.room.Diameter();
  for (size_t i = 1; i < poses.size(); ++i) {
    CounterRng rng(seed, kPerturbStream + i);
    const double angle = std::abs(sigma * rng.Normal());
    const Eigen::Vector3d axis = rng.UnitVector();
    const Eigen::Vector3d shift = offset * rng.UnitVector();
    if (angle == 0.0 && offset == 0.0) {
      continue;
    }
    const Eigen::Vector3d center = poses[i].Center() + shift;
    poses[i].rotation = ExpSO3(angle * axis) * poses[i].rotation;
    poses[i].translation = -poses[i].rotation * center;
  }
  return poses;
}

}  // namespace omnisfm
