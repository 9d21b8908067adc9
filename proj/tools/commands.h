#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "omnisfm/config.h"

namespace omnisfm::cli {

enum ExitCode : int { kSuccess = 0, kInputError = 2, kPipelineFailure = 3 };

struct GlobalOptions {
  std::string config_path;
  std::optional<uint64_t> seed;
  int threads = 1;
};

// Config file (if any) with the --seed override applied.
Config ResolveConfig(const GlobalOptions& global);

struct TracksArgs {
  std::string matches;
  std::string out;
};
int CmdTracks(const GlobalOptions& global, const TracksArgs& args, std::ostream& out,
              std::ostream& err);

struct ReconstructArgs {
  std::string matches;
  std::string tracks;
  std::string pairs;
  std::string out_dir;
};
int CmdReconstruct(const GlobalOptions& global, const ReconstructArgs& args,
                   std::ostream& out, std::ostream& err);

struct CubemapArgs {
  std::string image;
  int face_size = 0;
  std::string out_dir;
};
int CmdCubemap(const CubemapArgs& args, std::ostream& out, std::ostream& err);

struct SynthArgs {
  int cams = 20;
  int points = 1000;
  std::vector<double> room = {8.0, 6.0, 3.0};  // width, depth, height
  double noise = 0.0;
  double outliers = 0.0;
  int width = 640;
  std::string out_scene;
  std::string out_matches;
};
int CmdSynth(const GlobalOptions& global, const SynthArgs& args, std::ostream& out,
             std::ostream& err);

struct EvaluateArgs {
  std::string est;
  std::string gt;
};
int CmdEvaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);

// Name of the i-th synthetic camera.
std::string SyntheticImageName(int index);

}  // namespace omnisfm::cli
