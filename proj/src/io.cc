#include "omnisfm/io.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "omnisfm/error.h"

namespace omnisfm {

namespace {

constexpr const char* kMatchesHeader = "im360-matches v1";
constexpr const char* kTracksHeader = "im360-tracks v1";

// Splits lines into whitespace-separated tokens and tracks line numbers.
class LineReader {
 public:
  LineReader(std::istream& in, std::string source)
      : in_(in), source_(std::move(source)) {}

  // Next line with at least one token, skipping blanks and `#` comments.
  bool Next(std::vector<std::string>* tokens) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) {
        line.resize(hash);
      }
      tokens->clear();
      std::istringstream ss(line);
      std::string tok;
      while (ss >> tok) {
        tokens->push_back(tok);
      }
      if (!tokens->empty()) {
        return true;
      }
    }
    return false;
  }

  // The raw next line including blanks; used for the header.
  bool NextRaw(std::string* line) {
    if (!std::getline(in_, *line)) {
      return false;
    }
    ++line_;
    while (!line->empty() && (line->back() == '\r' || line->back() == ' ')) {
      line->pop_back();
    }
    return true;
  }

  [[noreturn]] void Fail(const std::string& what) const {
    throw ParseError(source_, line_, what);
  }

  double Double(const std::string& tok) const {
    double v = 0.0;
    const char* end = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
      Fail("expected a finite number, got '" + tok + "'");
    }
    return v;
  }

  long long Int(const std::string& tok) const {
    long long v = 0;
    const char* end = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || ptr != end) {
      Fail("expected an integer, got '" + tok + "'");
    }
    return v;
  }

  void Expect(const std::vector<std::string>& tokens, size_t n,
              const std::string& what) const {
    if (tokens.size() != n) {
      Fail(what + ": expected " + std::to_string(n) + " fields, got " +
           std::to_string(tokens.size()));
    }
  }

  int line() const { return line_; }

 private:
  std::istream& in_;
  std::string source_;
  int line_ = 0;
};

// Returns false when the stream holds no non-blank content at all.
bool ReadHeader(LineReader& reader, const std::string& expected) {
  std::string line;
  while (reader.NextRaw(&line)) {
    if (line.find_first_not_of(" \t") == std::string::npos) {
      continue;
    }
    if (line != expected) {
      reader.Fail("expected header '" + expected + "'");
    }
    return true;
  }
  return false;
}

void ParseDims(LineReader& reader, const std::vector<std::string>& t,
               ImageCatalog* catalog) {
  reader.Expect(t, 4, "dims");
  const long long w = reader.Int(t[2]);
  const long long h = reader.Int(t[3]);
  ErpDims dims{static_cast<int>(w), static_cast<int>(h)};
  try {
    if (w != dims.width || h != dims.height) {
      throw DomainError("dimension out of range");
    }
    dims.Check();
  } catch (const DomainError& e) {
    reader.Fail(std::string("bad dims: ") + e.what());
  }
  const std::optional<ImageId> existing = catalog->Find(t[1]);
  if (existing && catalog->images()[*existing].dims.width != 0 &&
      !(catalog->images()[*existing].dims == dims)) {
    reader.Fail("conflicting dims for image '" + t[1] + "'");
  }
  catalog->images()[catalog->Intern(t[1])].dims = dims;
}

ImageId DeclaredImage(LineReader& reader, const ImageCatalog& catalog,
                      const std::string& name) {
  const std::optional<ImageId> id = catalog.Find(name);
  if (!id) {
    reader.Fail("image '" + name + "' used before its dims line");
  }
  return *id;
}

ErpPoint ParsePixel(LineReader& reader, const std::string& x, const std::string& y,
                    const ErpDims& dims) {
  const ErpPoint p{reader.Double(x), reader.Double(y)};
  if (p.c < 0.0 || p.c > dims.width || p.r < 0.0 || p.r > dims.height) {
    reader.Fail("pixel (" + x + ", " + y + ") outside the image");
  }
  return p;
}

void WriteDims(std::ostream& out, const ImageCatalog& catalog) {
  for (const ImageInfo& info : catalog.images()) {
    out << "dims " << info.name << ' ' << info.dims.width << ' '
        << info.dims.height << '\n';
  }
}

template <typename T, typename Fn>
T ReadFile(const std::string& path, Fn fn) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError(path, 0, "cannot open file");
  }
  return fn(in, path);
}

}  // namespace

std::string FormatDouble(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  // Prefer the shortest form that still round-trips.
  for (int precision = 1; precision < 17; ++precision) {
    char shorter[32];
    std::snprintf(shorter, sizeof(shorter), "%.*g", precision, value);
    if (std::strtod(shorter, nullptr) == value) {
      return shorter;
    }
  }
  return buf;
}

ImageId ImageCatalog::Intern(const std::string& name) {
  const auto [it, inserted] = ids_.emplace(name, static_cast<ImageId>(images_.size()));
  if (inserted) {
    images_.push_back({name, ErpDims{}});
  }
  return it->second;
}

std::optional<ImageId> ImageCatalog::Find(const std::string& name) const {
  const auto it = ids_.find(name);
  if (it == ids_.end()) {
    return std::nullopt;
  }
  return it->second;
}

// ---------------------------------------------------------------------------

MatchesData ReadMatches(std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  MatchesData data;
  if (!ReadHeader(reader, kMatchesHeader)) {
    return data;
  }
  std::vector<std::string> t;
  PairMatches* current = nullptr;
  while (reader.Next(&t)) {
    if (t[0] == "dims") {
      ParseDims(reader, t, &data.catalog);
    } else if (t[0] == "pair") {
      reader.Expect(t, 3, "pair");
      PairMatches pm;
      pm.image_a = DeclaredImage(reader, data.catalog, t[1]);
      pm.image_b = DeclaredImage(reader, data.catalog, t[2]);
      if (pm.image_a == pm.image_b) {
        reader.Fail("pair of an image with itself");
      }
      data.pairs.push_back(std::move(pm));
      current = &data.pairs.back();
    } else {
      if (current == nullptr) {
        reader.Fail("match line before any pair line");
      }
      reader.Expect(t, 5, "match");
      Correspondence c;
      c.px_a = ParsePixel(reader, t[0], t[1], data.catalog.images()[current->image_a].dims);
      c.px_b = ParsePixel(reader, t[2], t[3], data.catalog.images()[current->image_b].dims);
      c.confidence = reader.Double(t[4]);
      current->matches.push_back(c);
    }
  }
  return data;
}

MatchesData ReadMatchesFile(const std::string& path) {
  return ReadFile<MatchesData>(path, ReadMatches);
}

void WriteMatches(std::ostream& out, const MatchesData& data) {
  out << kMatchesHeader << '\n';
  WriteDims(out, data.catalog);
  for (const PairMatches& pm : data.pairs) {
    out << "pair " << data.catalog.Name(pm.image_a) << ' '
        << data.catalog.Name(pm.image_b) << '\n';
    for (const Correspondence& c : pm.matches) {
      out << FormatDouble(c.px_a.c) << ' ' << FormatDouble(c.px_a.r) << ' '
          << FormatDouble(c.px_b.c) << ' ' << FormatDouble(c.px_b.r) << ' '
          << FormatDouble(c.confidence) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------

TracksData ReadTracks(std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  TracksData data;
  if (!ReadHeader(reader, kTracksHeader)) {
    reader.Fail("empty tracks file");
  }
  std::vector<std::string> t;
  while (reader.Next(&t)) {
    if (t[0] == "grid") {
      reader.Expect(t, 2, "grid");
      data.grid_size = reader.Double(t[1]);
      if (!(data.grid_size > 0.0)) {
        reader.Fail("grid size must be positive");
      }
    } else if (t[0] == "dims") {
      ParseDims(reader, t, &data.catalog);
    } else if (t[0] == "track") {
      if (!(data.grid_size > 0.0)) {
        reader.Fail("track line before the grid line");
      }
      if (t.size() < 2) {
        reader.Fail("track: missing view count");
      }
      const long long n = reader.Int(t[1]);
      if (n < 2) {
        reader.Fail("track with fewer than two views");
      }
      reader.Expect(t, 2 + 3 * static_cast<size_t>(n), "track");
      Track track;
      for (long long k = 0; k < n; ++k) {
        const std::string& name = t[2 + 3 * k];
        const ImageId image = DeclaredImage(reader, data.catalog, name);
        TrackObservation obs;
        obs.coord = ParsePixel(reader, t[3 + 3 * k], t[4 + 3 * k],
                               data.catalog.images()[image].dims);
        obs.cell = QuantizeCell(obs.coord, data.grid_size);
        if (!track.observations.emplace(image, obs).second) {
          reader.Fail("track lists image '" + name + "' twice");
        }
      }
      data.tracks.push_back(std::move(track));
    } else {
      reader.Fail("unknown record '" + t[0] + "'");
    }
  }
  return data;
}

TracksData ReadTracksFile(const std::string& path) {
  return ReadFile<TracksData>(path, ReadTracks);
}

void WriteTracks(std::ostream& out, const TracksData& data) {
  out << kTracksHeader << '\n';
  out << "grid " << FormatDouble(data.grid_size) << '\n';
  WriteDims(out, data.catalog);
  for (const Track& track : data.tracks) {
    out << "track " << track.size();
    for (const auto& [image, obs] : track.observations) {
      out << ' ' << data.catalog.Name(image) << ' ' << FormatDouble(obs.coord.c)
          << ' ' << FormatDouble(obs.coord.r);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

SceneData ReadScene(std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  SceneData data;
  std::set<std::string> seen;
  std::vector<std::string> t;
  while (reader.Next(&t)) {
    if (t[0] == "pose") {
      reader.Expect(t, 9, "pose");
      const Eigen::Vector4d q(reader.Double(t[2]), reader.Double(t[3]),
                              reader.Double(t[4]), reader.Double(t[5]));
      if (std::abs(q.norm() - 1.0) > 1e-6) {
        reader.Fail("quaternion is not unit length");
      }
      const Eigen::Vector3d tr(reader.Double(t[6]), reader.Double(t[7]),
                               reader.Double(t[8]));
      if (!seen.insert(t[1]).second) {
        reader.Fail("duplicate pose for '" + t[1] + "'");
      }
      data.poses.emplace_back(t[1], Pose::FromQuaternion(q, tr));
    } else if (t[0] == "point") {
      reader.Expect(t, 5, "point");
      const long long id = reader.Int(t[1]);
      data.points.emplace_back(static_cast<int>(id),
                               Eigen::Vector3d(reader.Double(t[2]), reader.Double(t[3]),
                                               reader.Double(t[4])));
    } else {
      reader.Fail("unknown record '" + t[0] + "'");
    }
  }
  return data;
}

SceneData ReadSceneFile(const std::string& path) {
  return ReadFile<SceneData>(path, ReadScene);
}

void WriteScene(std::ostream& out, const SceneData& data) {
  for (const auto& [name, pose] : data.poses) {
    const Eigen::Vector4d q = pose.Quaternion();
    out << "pose " << name;
    for (int k = 0; k < 4; ++k) {
      out << ' ' << FormatDouble(q[k]);
    }
    for (int k = 0; k < 3; ++k) {
      out << ' ' << FormatDouble(pose.translation[k]);
    }
    out << '\n';
  }
  for (const auto& [id, x] : data.points) {
    out << "point " << id << ' ' << FormatDouble(x.x()) << ' '
        << FormatDouble(x.y()) << ' ' << FormatDouble(x.z()) << '\n';
  }
}

PoseSet ToPoseSet(const SceneData& scene) {
  PoseSet out;
  for (const auto& [name, pose] : scene.poses) {
    out[name] = pose;
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> ReadPairs(
    std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::string> t;
  while (reader.Next(&t)) {
    reader.Expect(t, 2, "pair");
    if (t[0] == t[1]) {
      reader.Fail("pair of an image with itself");
    }
    pairs.emplace_back(t[0], t[1]);
  }
  return pairs;
}

std::vector<std::pair<std::string, std::string>> ReadPairsFile(
    const std::string& path) {
  return ReadFile<std::vector<std::pair<std::string, std::string>>>(path, ReadPairs);
}

void WritePly(std::ostream& out, const Reconstruction& recon) {
  const auto& points = recon.Points();
  bool colored = !points.empty();
  for (const auto& [track, point] : points) {
    colored = colored && point.color.has_value();
  }
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << points.size() << '\n';
  out << "property double x\nproperty double y\nproperty double z\n";
  if (colored) {
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  out << "property int track_length\nend_header\n";
  for (const auto& [track, point] : points) {
    out << FormatDouble(point.position.x()) << ' ' << FormatDouble(point.position.y())
        << ' ' << FormatDouble(point.position.z());
    if (colored) {
      for (const uint8_t v : *point.color) {
        out << ' ' << static_cast<int>(v);
      }
    }
    out << ' ' << recon.PointObservations(track).size() << '\n';
  }
}

}  // namespace omnisfm
