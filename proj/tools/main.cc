#include <iostream>

#include "CLI11.hpp"
#include "commands.h"

int main(int argc, char** argv) {
  using namespace omnisfm::cli;
  CLI::App app{"Spherical incremental structure-from-motion toolkit"};
  app.require_subcommand(1);

  GlobalOptions global;
  uint64_t seed = 0;
  app.add_option("--config", global.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  CLI::Option* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--threads", global.threads, "worker thread cap")
      ->check(CLI::PositiveNumber);

  TracksArgs tracks;
  CLI::App* cmd_tracks = app.add_subcommand("tracks", "quantize matches and build tracks");
  cmd_tracks->add_option("--matches", tracks.matches, "matches file")->required();
  cmd_tracks->add_option("--out", tracks.out, "output tracks file")->required();

  ReconstructArgs recon;
  CLI::App* cmd_recon = app.add_subcommand("reconstruct", "incremental reconstruction");
  CLI::Option* matches_opt =
      cmd_recon->add_option("--matches", recon.matches, "matches file");
  CLI::Option* tracks_opt = cmd_recon->add_option("--tracks", recon.tracks, "tracks file");
  matches_opt->excludes(tracks_opt);
  cmd_recon->add_option("--pairs", recon.pairs, "restrict to these image pairs");
  cmd_recon->add_option("--out-dir", recon.out_dir, "output directory")->required();

  CubemapArgs cubemap;
  CLI::App* cmd_cubemap = app.add_subcommand("cubemap", "split a panorama into cube faces");
  cmd_cubemap->add_option("--image", cubemap.image, "equirectangular PNG")->required();
  cmd_cubemap->add_option("--face-size", cubemap.face_size, "face edge in pixels")
      ->required()
      ->check(CLI::PositiveNumber);
  cmd_cubemap->add_option("--out-dir", cubemap.out_dir, "output directory")->required();

  SynthArgs synth;
  CLI::App* cmd_synth = app.add_subcommand("synth", "generate a synthetic scene");
  cmd_synth->add_option("--cams", synth.cams, "number of cameras");
  cmd_synth->add_option("--points", synth.points, "number of points");
  cmd_synth->add_option("--room", synth.room, "width,depth,height")->delimiter(',');
  cmd_synth->add_option("--noise", synth.noise, "pixel noise sigma");
  cmd_synth->add_option("--outliers", synth.outliers, "outlier fraction per pair");
  cmd_synth->add_option("--width", synth.width, "panorama width (height = width / 2)");
  cmd_synth->add_option("--out-scene", synth.out_scene, "ground truth scene file")
      ->required();
  cmd_synth->add_option("--out-matches", synth.out_matches, "matches file")->required();

  EvaluateArgs eval;
  CLI::App* cmd_eval = app.add_subcommand("evaluate", "compare poses against ground truth");
  cmd_eval->add_option("--est", eval.est, "estimated pose file")->required();
  cmd_eval->add_option("--gt", eval.gt, "ground truth pose file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kInputError;
  }
  if (*seed_opt) {
    global.seed = seed;
  }

  if (*cmd_tracks) {
    return CmdTracks(global, tracks, std::cout, std::cerr);
  }
  if (*cmd_recon) {
    return CmdReconstruct(global, recon, std::cout, std::cerr);
  }
  if (*cmd_cubemap) {
    return CmdCubemap(cubemap, std::cout, std::cerr);
  }
  if (*cmd_synth) {
    return CmdSynth(global, synth, std::cout, std::cerr);
  }
  return CmdEvaluate(eval, std::cout, std::cerr);
}
