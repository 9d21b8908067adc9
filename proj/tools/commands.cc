#include "commands.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "omnisfm/error.h"
#include "omnisfm/evalkit.h"
#include "omnisfm/image.h"
#include "omnisfm/io.h"
#include "omnisfm/pipeline.h"
#include "omnisfm/sphere_geom.h"
#include "omnisfm/synth_oracle.h"

namespace omnisfm::cli {

namespace {

namespace fs = std::filesystem;

class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void WriteTextFile(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) {
    throw OutputError("cannot write " + path.string());
  }
}

template <typename Fn>
int Guard(std::ostream& err, Fn fn) {
  try {
    return fn();
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const InsufficientDataError& e) {
    err << "error: " << e.what() << '\n';
    return kPipelineFailure;
  } catch (const EvaluationError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const OutputError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
  }
  return kInputError;
}

std::optional<PairFilter> LoadPairFilter(const std::string& path,
                                         const ImageCatalog& catalog) {
  if (path.empty()) {
    return std::nullopt;
  }
  PairFilter filter;
  for (const auto& [a, b] : ReadPairsFile(path)) {
    const std::optional<ImageId> ia = catalog.Find(a);
    const std::optional<ImageId> ib = catalog.Find(b);
    if (!ia || !ib) {
      throw DomainError("pairs file names an unknown image: " + (ia ? b : a));
    }
    filter.insert({std::min(*ia, *ib), std::max(*ia, *ib)});
  }
  return filter;
}

}  // namespace

std::string SyntheticImageName(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "cam%03d", index);
  return buf;
}

Config ResolveConfig(const GlobalOptions& global) {
  Config config = global.config_path.empty() ? Config() : LoadConfig(global.config_path);
  if (global.seed) {
    config.SetSeed(*global.seed);
  }
  return config;
}

int CmdTracks(const GlobalOptions& global, const TracksArgs& args, std::ostream& out,
              std::ostream& err) {
  return Guard(err, [&] {
    const Config config = ResolveConfig(global);
    const MatchesData matches = ReadMatchesFile(args.matches);
    if (matches.pairs.empty()) {
      err << "warning: no pairs in " << args.matches << '\n';
    }
    std::vector<QuantizedPairMatches> quantized;
    for (const PairMatches& pm : matches.pairs) {
      quantized.push_back(QuantizeMatches(pm, config.grid_size));
    }
    TrackBuildResult built = BuildTracks(quantized);
    TracksData data;
    data.catalog = matches.catalog;
    data.grid_size = config.grid_size;
    data.tracks = std::move(built.tracks);
    std::ostringstream text;
    WriteTracks(text, data);
    WriteTextFile(args.out, text.str());
    out << "tracks = " << data.tracks.size() << '\n';
    out << "dropped_conflicts = " << built.dropped_conflicts << '\n';
    return kSuccess;
  });
}

int CmdReconstruct(const GlobalOptions& global, const ReconstructArgs& args,
                   std::ostream& out, std::ostream& err) {
  return Guard(err, [&] {
    if (args.matches.empty() == args.tracks.empty()) {
      throw DomainError("exactly one of --matches and --tracks is required");
    }
    const Config config = ResolveConfig(global);
    ImageCatalog catalog;
    PipelineResult result;
    if (!args.matches.empty()) {
      const MatchesData matches = ReadMatchesFile(args.matches);
      catalog = matches.catalog;
      result = ReconstructFromMatches(catalog.images(), matches.pairs, config,
                                      global.threads, LoadPairFilter(args.pairs, catalog));
    } else {
      const TracksData tracks = ReadTracksFile(args.tracks);
      catalog = tracks.catalog;
      result = ReconstructFromTracks(catalog.images(), tracks.tracks, tracks.grid_size,
                                     config, global.threads,
                                     LoadPairFilter(args.pairs, catalog));
    }
    const ReconstructionSummary& summary = result.output.summary;
    const Reconstruction& recon = result.output.recon;

    int verified = 0;
    for (const PairVerification& v : result.verification) {
      verified += v.verified ? 1 : 0;
    }
    std::ostringstream log;
    log << "# configuration\n" << FormatConfig(config);
    log << "# pairs\npairs = " << result.pairs.size() << "\nverified_pairs = " << verified
        << "\ntracks = " << result.tracks.size() << '\n';
    for (size_t i = 0; i < result.pairs.size(); ++i) {
      log << "pair " << catalog.Name(result.pairs[i].image_a) << ' '
          << catalog.Name(result.pairs[i].image_b) << ' '
          << ToString(result.verification[i].status) << ' '
          << (result.verification[i].verified
                  ? result.verification[i].verified->geometry.num_inliers
                  : 0)
          << '\n';
    }
    log << "# reconstruction\n";
    if (!summary.success) {
      log << "status = failed\ndiagnostic = " << summary.diagnostic << '\n';
      WriteTextFile(fs::path(args.out_dir) / "log.txt", log.str());
      err << "error: " << summary.diagnostic << '\n';
      return static_cast<int>(kPipelineFailure);
    }
    log << "status = ok\n";
    log << "init_pair = " << catalog.Name(summary.init_pair.first) << ' '
        << catalog.Name(summary.init_pair.second) << '\n';
    log << "registered = " << recon.Poses().size() << " / " << catalog.size() << '\n';
    log << "points = " << recon.Points().size() << '\n';
    log << "observations = " << recon.NumObservations() << '\n';
    log << "local_ba_runs = " << summary.local_ba_runs << '\n';
    log << "global_ba_runs = " << summary.global_ba_runs << '\n';
    log << "filtered_points = " << summary.filtered_points << '\n';
    log << "filtered_observations = " << summary.filtered_observations << '\n';
    log << "retriangulated = " << summary.retriangulated << '\n';
    log << "registration_order =";
    for (const ImageId id : recon.RegistrationOrder()) {
      log << ' ' << catalog.Name(id);
    }
    log << "\nunregistered =";
    for (const ImageId id : summary.unregistered) {
      log << ' ' << catalog.Name(id);
    }
    log << "\n# stage timings (seconds)\n";
    for (const auto& [stage, seconds] : summary.stage_seconds) {
      log << "time_" << stage << " = " << std::fixed << std::setprecision(6) << seconds
          << '\n';
    }

    SceneData poses;
    for (const auto& [id, pose] : recon.Poses()) {
      poses.poses.emplace_back(catalog.Name(id), pose);
    }
    std::ostringstream pose_text;
    WriteScene(pose_text, poses);
    std::ostringstream ply;
    WritePly(ply, recon);
    const fs::path dir(args.out_dir);
    WriteTextFile(dir / "poses.txt", pose_text.str());
    WriteTextFile(dir / "points.ply", ply.str());
    WriteTextFile(dir / "log.txt", log.str());

    out << "registered = " << recon.Poses().size() << " / " << catalog.size() << '\n';
    out << "points = " << recon.Points().size() << '\n';
    if (!summary.unregistered.empty()) {
      out << "unregistered =";
      for (const ImageId id : summary.unregistered) {
        out << ' ' << catalog.Name(id);
      }
      out << '\n';
    }
    return static_cast<int>(kSuccess);
  });
}

int CmdCubemap(const CubemapArgs& args, std::ostream& out, std::ostream& err) {
  return Guard(err, [&] {
    const Image erp = ReadPng(args.image);
    const std::array<CubemapFace, 6> faces = ErpToCubemap(erp, args.face_size);
    const fs::path dir(args.out_dir);
    fs::create_directories(dir);
    SceneData poses;
    for (const CubemapFace& face : faces) {
      const std::string name = "face_" + CubeFaceName(face.face_id);
      WritePng((dir / (name + ".png")).string(), face.image);
      poses.poses.emplace_back(name, face.virtual_pose);
    }
    std::ostringstream text;
    WriteScene(text, poses);
    WriteTextFile(dir / "faces.txt", text.str());
    out << "faces = 6\nface_size = " << args.face_size << '\n';
    return kSuccess;
  });
}

int CmdSynth(const GlobalOptions& global, const SynthArgs& args, std::ostream& out,
             std::ostream& err) {
  return Guard(err, [&] {
    if (args.room.size() != 3) {
      throw DomainError("--room takes width,depth,height");
    }
    if (args.width % 2 != 0) {
      throw DomainError("--width must be even");
    }
    SceneSpec spec;
    spec.n_cams = args.cams;
    spec.n_points = args.points;
    spec.room = RoomDims{args.room[0], args.room[1], args.room[2]};
    spec.seed = global.seed ? *global.seed : 42;
    const GroundTruthScene scene = GenerateScene(spec);
    ObserveOptions observe;
    observe.dims = ErpDims{args.width, args.width / 2};
    observe.noise_sigma = args.noise;
    observe.outlier_frac = args.outliers;
    const SyntheticMatches matches = Observe(scene, observe);

    SceneData scene_data;
    for (int i = 0; i < spec.n_cams; ++i) {
      scene_data.poses.emplace_back(SyntheticImageName(i), scene.poses[i]);
    }
    for (size_t j = 0; j < scene.points.size(); ++j) {
      scene_data.points.emplace_back(static_cast<int>(j), scene.points[j]);
    }
    MatchesData matches_data;
    for (int i = 0; i < spec.n_cams; ++i) {
      matches_data.catalog.images()[matches_data.catalog.Intern(SyntheticImageName(i))]
          .dims = observe.dims;
    }
    matches_data.pairs = matches.pairs;

    std::ostringstream scene_text;
    WriteScene(scene_text, scene_data);
    std::ostringstream matches_text;
    WriteMatches(matches_text, matches_data);
    WriteTextFile(args.out_scene, scene_text.str());
    WriteTextFile(args.out_matches, matches_text.str());
    out << "cameras = " << spec.n_cams << "\npoints = " << spec.n_points
        << "\npairs = " << matches.pairs.size() << '\n';
    return kSuccess;
  });
}

int CmdEvaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  return Guard(err, [&] {
    const PoseSet est = ToPoseSet(ReadSceneFile(args.est));
    const PoseSet gt = ToPoseSet(ReadSceneFile(args.gt));
    out << FormatReport(Evaluate(est, gt));
    return kSuccess;
  });
}

}  // namespace omnisfm::cli
