#include "omnisfm/config.h"

#include <charconv>
#include <cmath>
#include <optional>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <sstream>
#include <vector>

#include "omnisfm/error.h"
#include "omnisfm/io.h"

namespace omnisfm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Key {
  std::string name;
  // Parses and range-checks the value, returning an error message or "".
  std::function<std::string(Config*, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

std::optional<double> ToDouble(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    return std::nullopt;
  }
  return v;
}

std::optional<long long> ToInt(const std::string& s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    return std::nullopt;
  }
  return v;
}

// lo/hi bounds; `open_lo` excludes the lower bound.
Key Real(std::string name, double lo, double hi, bool open_lo,
         std::function<double&(Config&)> field) {
  return Key{
      name,
      [=](Config* c, const std::string& s) -> std::string {
        const std::optional<double> v = ToDouble(s);
        if (!v || !std::isfinite(*v)) {
          return "expected a number";
        }
        if ((open_lo ? *v <= lo : *v < lo) || *v > hi) {
          return "value out of range";
        }
        field(*c) = *v;
        return "";
      },
      [=](const Config& c) { return FormatDouble(field(const_cast<Config&>(c))); }};
}

Key IntKey(std::string name, long long lo, long long hi,
           std::function<int&(Config&)> field) {
  return Key{
      name,
      [=](Config* c, const std::string& s) -> std::string {
        const std::optional<long long> v = ToInt(s);
        if (!v) {
          return "expected an integer";
        }
        if (*v < lo || *v > hi) {
          return "value out of range";
        }
        field(*c) = static_cast<int>(*v);
        return "";
      },
      [=](const Config& c) { return std::to_string(field(const_cast<Config&>(c))); }};
}

const std::vector<Key>& Keys() {
  static const std::vector<Key> keys = {
      Real("grid_size", 0.0, 1e6, true, [](Config& c) -> double& { return c.grid_size; }),
      Real("ransac_threshold", 0.0, 3.2, true,
           [](Config& c) -> double& { return c.ransac.threshold; }),
      IntKey("ransac_max_iters", 1, 100000000,
             [](Config& c) -> int& { return c.ransac.max_iters; }),
      Real("ransac_confidence", 0.0, 1.0, true,
           [](Config& c) -> double& { return c.ransac.confidence; }),
      IntKey("min_pair_inliers", 8, 100000000,
             [](Config& c) -> int& { return c.ransac.min_inliers; }),
      Real("init_min_tri_angle_deg", 0.0, 90.0, false,
           [](Config& c) -> double& { return c.sfm.init_min_tri_angle_deg; }),
      IntKey("min_init_points", 2, 100000000,
             [](Config& c) -> int& { return c.sfm.min_init_points; }),
      Real("tri_min_angle_deg", 0.0, 90.0, false,
           [](Config& c) -> double& { return c.sfm.triangulation.min_angle_deg; }),
      Real("tri_max_reproj", 0.0, 3.2, true,
           [](Config& c) -> double& { return c.sfm.triangulation.max_reproj; }),
      Real("resection_threshold", 0.0, 3.2, true,
           [](Config& c) -> double& { return c.sfm.resection.threshold; }),
      IntKey("resection_max_iters", 1, 100000000,
             [](Config& c) -> int& { return c.sfm.resection.max_iters; }),
      IntKey("min_resection_inliers", 4, 100000000,
             [](Config& c) -> int& { return c.sfm.resection.min_inliers; }),
      IntKey("local_ba_min_shared", 1, 100000000,
             [](Config& c) -> int& { return c.sfm.local_ba_min_shared; }),
      IntKey("global_ba_every", 1, 100000000,
             [](Config& c) -> int& { return c.sfm.global_ba_every; }),
      Real("robust_scale", 0.0, kInf, true,
           [](Config& c) -> double& { return c.sfm.robust_scale; }),
      IntKey("ba_max_iters", 1, 100000000, [](Config& c) -> int& { return c.sfm.ba.max_iters; }),
      Real("ba_f_tol", 0.0, 1.0, false, [](Config& c) -> double& { return c.sfm.ba.f_tol; }),
      Real("ba_g_tol", 0.0, 1.0, false, [](Config& c) -> double& { return c.sfm.ba.g_tol; }),
      Key{"seed",
          [](Config* c, const std::string& s) -> std::string {
            uint64_t v = 0;
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || ptr != s.data() + s.size()) {
              return "expected a non-negative integer";
            }
            c->SetSeed(v);
            return "";
          },
          [](const Config& c) { return std::to_string(c.seed); }},
  };
  return keys;
}

std::string Trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return "";
  }
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void Config::SetSeed(uint64_t value) {
  seed = value;
  ransac.seed = value;
  sfm.seed = value;
  sfm.two_view.seed = value;
  sfm.resection.seed = value;
}

Config ParseConfig(std::istream& in, const std::string& source) {
  Config config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) {
      line.resize(hash);
    }
    line = Trim(line);
    if (line.empty()) {
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(source, line_no, "expected 'key = value'");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    const Key* match = nullptr;
    for (const Key& k : Keys()) {
      if (k.name == key) {
        match = &k;
      }
    }
    if (match == nullptr) {
      throw ParseError(source, line_no, "unknown key '" + key + "'");
    }
    const std::string err = match->set(&config, value);
    if (!err.empty()) {
      throw ParseError(source, line_no, key + ": " + err + " ('" + value + "')");
    }
  }
  config.sfm.two_view = config.ransac;
  return config;
}

Config LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError(path, 0, "cannot open file");
  }
  return ParseConfig(in, path);
}

std::string FormatConfig(const Config& config) {
  std::ostringstream out;
  for (const Key& k : Keys()) {
    out << k.name << " = " << k.get(config) << '\n';
  }
  return out.str();
}

}  // namespace omnisfm
