#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "omnisfm/evalkit.h"
#include "omnisfm/match_graph.h"
#include "omnisfm/sfm_core.h"

namespace omnisfm {

// Image names mapped to dense ids in order of first appearance.
class ImageCatalog {
 public:
  ImageId Intern(const std::string& name);
  std::optional<ImageId> Find(const std::string& name) const;
  const std::string& Name(ImageId id) const { return images_.at(id).name; }
  std::vector<ImageInfo>& images() { return images_; }
  const std::vector<ImageInfo>& images() const { return images_; }
  size_t size() const { return images_.size(); }

 private:
  std::vector<ImageInfo> images_;
  std::map<std::string, ImageId> ids_;
};

struct MatchesData {
  ImageCatalog catalog;
  std::vector<PairMatches> pairs;
};

struct TracksData {
  ImageCatalog catalog;
  double grid_size = 0.0;
  std::vector<Track> tracks;
};

struct SceneData {
  std::vector<std::pair<std::string, Pose>> poses;
  std::vector<std::pair<int, Eigen::Vector3d>> points;
};

// Matches file:
//   im360-matches v1
//   dims <image> <width> <height>
//   pair <image_a> <image_b>
//   x_a y_a x_b y_b conf
// A completely empty stream yields no pairs. Throws ParseError.
MatchesData ReadMatches(std::istream& in, const std::string& source);
MatchesData ReadMatchesFile(const std::string& path);
void WriteMatches(std::ostream& out, const MatchesData& data);

// Tracks file:
//   im360-tracks v1
//   grid <r>
//   dims <image> <width> <height>
//   track <n> (<image> <x> <y>){n}
TracksData ReadTracks(std::istream& in, const std::string& source);
TracksData ReadTracksFile(const std::string& path);
void WriteTracks(std::ostream& out, const TracksData& data);

// Scene / pose file: `pose <name> qw qx qy qz tx ty tz` and
// `point <id> x y z`. Blank lines and `#` comments are ignored.
SceneData ReadScene(std::istream& in, const std::string& source);
SceneData ReadSceneFile(const std::string& path);
void WriteScene(std::ostream& out, const SceneData& data);
PoseSet ToPoseSet(const SceneData& scene);

// Pairs file: one `<image_a> <image_b>` per line.
std::vector<std::pair<std::string, std::string>> ReadPairs(
    std::istream& in, const std::string& source);
std::vector<std::pair<std::string, std::string>> ReadPairsFile(
    const std::string& path);

// ASCII PLY with x y z, r g b when every point has a color, and the track
// length as an int property.
void WritePly(std::ostream& out, const Reconstruction& recon);

// Shortest round-trippable text form of a double.
std::string FormatDouble(double value);

}  // namespace omnisfm
