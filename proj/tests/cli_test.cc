#include "commands.h"

#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "omnisfm/image.h"
#include "omnisfm/io.h"
#include "omnisfm/synth_oracle.h"

namespace omnisfm::cli {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           (std::string("omnisfm_cli_") + info->name() + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string Slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static void Spit(const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
  }

  int Synth(const SynthArgs& a, uint64_t seed = 42) {
    GlobalOptions g;
    g.seed = seed;
    std::ostringstream out, err;
    return CmdSynth(g, a, out, err);
  }

  fs::path dir_;
};

SynthArgs SmallSynth(const std::string& scene, const std::string& matches) {
  SynthArgs a;
  a.cams = 6;
  a.points = 200;
  a.noise = 0.5;
  a.outliers = 0.1;
  a.out_scene = scene;
  a.out_matches = matches;
  return a;
}

TEST_F(CliTest, SynthIsDeterministic) {
  ASSERT_EQ(Synth(SmallSynth(Path("s1.txt"), Path("m1.txt"))), kSuccess);
  ASSERT_EQ(Synth(SmallSynth(Path("s2.txt"), Path("m2.txt"))), kSuccess);
  ASSERT_EQ(Synth(SmallSynth(Path("s3.txt"), Path("m3.txt")), 43), kSuccess);
  EXPECT_EQ(Slurp(Path("s1.txt")), Slurp(Path("s2.txt")));
  EXPECT_EQ(Slurp(Path("m1.txt")), Slurp(Path("m2.txt")));
  EXPECT_NE(Slurp(Path("s1.txt")), Slurp(Path("s3.txt")));
  EXPECT_EQ(ReadSceneFile(Path("s1.txt")).poses.front().first, "cam000");
}

TEST_F(CliTest, TracksMatchOracleVisibility) {
  SynthArgs a = SmallSynth(Path("s.txt"), Path("m.txt"));
  a.noise = 0.0;
  a.outliers = 0.0;
  a.width = 8192;  // wide enough that no two points share a grid cell
  ASSERT_EQ(Synth(a), kSuccess);
  std::ostringstream out, err;
  ASSERT_EQ(CmdTracks({}, {Path("m.txt"), Path("t.txt")}, out, err), kSuccess) << err.str();

  SceneSpec spec;
  spec.n_cams = 6;
  spec.n_points = 200;
  spec.seed = 42;
  const GroundTruthScene scene = GenerateScene(spec);
  size_t expected = 0;
  for (const auto& vis : scene.visibility) {
    expected += vis.size() >= 2 ? 1 : 0;
  }
  EXPECT_NE(out.str().find("tracks = " + std::to_string(expected) + "\n"), std::string::npos)
      << out.str();
  EXPECT_NE(out.str().find("dropped_conflicts = 0\n"), std::string::npos);
  const TracksData tracks = ReadTracksFile(Path("t.txt"));
  EXPECT_EQ(tracks.tracks.size(), expected);
  for (const Track& t : tracks.tracks) {
    EXPECT_EQ(t.size(), 6u);
  }
}

TEST_F(CliTest, EmptyMatchesWarns) {
  Spit(Path("empty.txt"), "");
  std::ostringstream out, err;
  EXPECT_EQ(CmdTracks({}, {Path("empty.txt"), Path("t.txt")}, out, err), kSuccess);
  EXPECT_NE(out.str().find("tracks = 0\n"), std::string::npos);
  EXPECT_NE(err.str().find("warning"), std::string::npos);
}

TEST_F(CliTest, TruncatedLineNamesTheLine) {
  Spit(Path("bad.txt"),
       "im360-matches v1\ndims a 640 320\ndims b 640 320\npair a b\n1 2 3 4 1\n5 6 7\n");
  std::ostringstream out, err;
  EXPECT_EQ(CmdTracks({}, {Path("bad.txt"), Path("t.txt")}, out, err), kInputError);
  EXPECT_NE(err.str().find("bad.txt:6:"), std::string::npos) << err.str();
}

TEST_F(CliTest, MissingInputIsInputError) {
  std::ostringstream out, err;
  EXPECT_EQ(CmdTracks({}, {Path("nope.txt"), Path("t.txt")}, out, err), kInputError);
  EXPECT_EQ(CmdEvaluate({Path("nope.txt"), Path("nope2.txt")}, out, err), kInputError);
  EXPECT_EQ(CmdReconstruct({}, {"", "", "", Path("out")}, out, err), kInputError);
}

TEST_F(CliTest, ReconstructWritesOutputsDeterministically) {
  ASSERT_EQ(Synth(SmallSynth(Path("s.txt"), Path("m.txt"))), kSuccess);
  GlobalOptions g;
  g.seed = 7;
  std::ostringstream out1, err1, out2, err2;
  ASSERT_EQ(CmdReconstruct(g, {Path("m.txt"), "", "", Path("r1")}, out1, err1), kSuccess)
      << err1.str();
  g.threads = 3;
  ASSERT_EQ(CmdReconstruct(g, {Path("m.txt"), "", "", Path("r2")}, out2, err2), kSuccess);
  EXPECT_NE(out1.str().find("registered = 6 / 6\n"), std::string::npos) << out1.str();
  EXPECT_EQ(Slurp(Path("r1/poses.txt")), Slurp(Path("r2/poses.txt")));
  EXPECT_EQ(ReadSceneFile(Path("r1/poses.txt")).poses.size(), 6u);
  const std::string ply = Slurp(Path("r1/points.ply"));
  EXPECT_EQ(ply.rfind("ply\n", 0), 0u);
  EXPECT_NE(ply.find("property int track_length"), std::string::npos);
  const std::string log = Slurp(Path("r1/log.txt"));
  for (const char* key : {"registered = 6 / 6", "time_initialization", "time_global_ba",
                          "time_registration", "registration_order ="}) {
    EXPECT_NE(log.find(key), std::string::npos) << key;
  }

  // Evaluate the reconstruction against the scene it came from.
  std::ostringstream eval, eval_err;
  ASSERT_EQ(CmdEvaluate({Path("r1/poses.txt"), Path("s.txt")}, eval, eval_err), kSuccess)
      << eval_err.str();
  EXPECT_NE(eval.str().find("registered = 6 / 6"), std::string::npos);
}

TEST_F(CliTest, ReconstructFromTracksFile) {
  SynthArgs a = SmallSynth(Path("s.txt"), Path("m.txt"));
  a.outliers = 0.0;
  ASSERT_EQ(Synth(a), kSuccess);
  std::ostringstream out, err;
  ASSERT_EQ(CmdTracks({}, {Path("m.txt"), Path("t.txt")}, out, err), kSuccess);
  ASSERT_EQ(CmdReconstruct({}, {"", Path("t.txt"), "", Path("r")}, out, err), kSuccess)
      << err.str();
  EXPECT_EQ(ReadSceneFile(Path("r/poses.txt")).poses.size(), 6u);
}

TEST_F(CliTest, DisconnectedComponentIsUnregistered) {
  SynthArgs a = SmallSynth(Path("s.txt"), Path("m.txt"));
  a.cams = 7;
  ASSERT_EQ(Synth(a), kSuccess);
  // Component {cam000..cam004} fully connected; {cam005, cam006} apart.
  std::string pairs;
  for (int i = 0; i < 5; ++i) {
    for (int j = i + 1; j < 5; ++j) {
      pairs += SyntheticImageName(i) + " " + SyntheticImageName(j) + "\n";
    }
  }
  pairs += "cam005 cam006\n";
  Spit(Path("pairs.txt"), pairs);
  std::ostringstream out, err;
  ASSERT_EQ(CmdReconstruct({}, {Path("m.txt"), "", Path("pairs.txt"), Path("r")}, out, err),
            kSuccess)
      << err.str();
  EXPECT_NE(out.str().find("registered = 5 / 7\n"), std::string::npos) << out.str();
  EXPECT_NE(out.str().find("unregistered = cam005 cam006\n"), std::string::npos) << out.str();
}

TEST_F(CliTest, InitializationFailureExitsThree) {
  Spit(Path("m.txt"),
       "im360-matches v1\ndims a 640 320\ndims b 640 320\npair a b\n1 2 3 4 1\n5 6 7 8 1\n");
  std::ostringstream out, err;
  EXPECT_EQ(CmdReconstruct({}, {Path("m.txt"), "", "", Path("r")}, out, err), kPipelineFailure);
  EXPECT_NE(err.str().find("error"), std::string::npos);
  EXPECT_TRUE(fs::exists(Path("r/log.txt")));
}

TEST_F(CliTest, CubemapWritesSixFaces) {
  Image erp(256, 128, 3);
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x < 256; ++x) {
      erp.at(x, y, 0) = 0.5f + 0.4f * static_cast<float>(std::sin(x * 0.05));
      erp.at(x, y, 1) = static_cast<float>(y) / 127.0f;
      erp.at(x, y, 2) = 0.25f;
    }
  }
  WritePng(Path("erp.png"), erp);
  std::ostringstream out, err;
  ASSERT_EQ(CmdCubemap({Path("erp.png"), 64, Path("faces")}, out, err), kSuccess) << err.str();
  int pngs = 0;
  for (const auto& entry : fs::directory_iterator(Path("faces"))) {
    if (entry.path().extension() == ".png") {
      const Image face = ReadPng(entry.path().string());
      EXPECT_EQ(face.width(), 64);
      EXPECT_EQ(face.height(), 64);
      ++pngs;
    }
  }
  EXPECT_EQ(pngs, 6);
  EXPECT_EQ(ReadSceneFile(Path("faces/faces.txt")).poses.size(), 6u);

  WritePng(Path("bad.png"), Image(200, 128, 3));
  EXPECT_EQ(CmdCubemap({Path("bad.png"), 64, Path("faces2")}, out, err), kInputError);
}

TEST_F(CliTest, EvaluateGroundTruthAgainstItself) {
  ASSERT_EQ(Synth(SmallSynth(Path("s.txt"), Path("m.txt"))), kSuccess);
  std::ostringstream out, err;
  ASSERT_EQ(CmdEvaluate({Path("s.txt"), Path("s.txt")}, out, err), kSuccess);
  EXPECT_NE(out.str().find("registered = 6 / 6\n"), std::string::npos);
  EXPECT_NE(out.str().find("auc@3 = 100.00\n"), std::string::npos);
  EXPECT_NE(out.str().find("auc@10 = 100.00\n"), std::string::npos);
}

}  // namespace
}  // namespace omnisfm::cli
