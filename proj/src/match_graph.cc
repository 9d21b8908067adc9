#include "omnisfm/match_graph.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "omnisfm/error.h"

namespace omnisfm {

double Quantize(double x, double grid_size) {
  if (!(grid_size > 0.0)) {
    throw DomainError("grid size must be positive");
  }
  return std::round(x / grid_size) * grid_size;
}

GridCell QuantizeCell(const ErpPoint& px, double grid_size) {
  if (!(grid_size > 0.0)) {
    throw DomainError("grid size must be positive");
  }
  return {static_cast<int64_t>(std::round(px.c / grid_size)),
          static_cast<int64_t>(std::round(px.r / grid_size))};
}

namespace {

struct CellPairHash {
  size_t operator()(const std::pair<GridCell, GridCell>& k) const {
    size_t h = std::hash<int64_t>()(k.first.col);
    h = h * 1000003u ^ std::hash<int64_t>()(k.first.row);
    h = h * 1000003u ^ std::hash<int64_t>()(k.second.col);
    h = h * 1000003u ^ std::hash<int64_t>()(k.second.row);
    return h;
  }
};

}  // namespace

QuantizedPairMatches QuantizeMatches(const PairMatches& pm, double grid_size) {
  if (!(grid_size > 0.0)) {
    throw DomainError("grid size must be positive");
  }
  QuantizedPairMatches out;
  out.image_a = pm.image_a;
  out.image_b = pm.image_b;
  out.grid_size = grid_size;
  std::unordered_map<std::pair<GridCell, GridCell>, size_t, CellPairHash> seen;
  seen.reserve(pm.matches.size());
  for (const Correspondence& m : pm.matches) {
    const GridCell ca = QuantizeCell(m.px_a, grid_size);
    const GridCell cb = QuantizeCell(m.px_b, grid_size);
    const auto [it, inserted] = seen.emplace(std::make_pair(ca, cb),
                                             out.matches.size());
    if (inserted) {
      out.matches.push_back({ca, cb, m});
    } else if (m.confidence > out.matches[it->second].source.confidence) {
      out.matches[it->second].source = m;
    }
  }
  return out;
}

namespace {

class TrackForest {
 public:
  int Node(const KeypointId& key, const ErpPoint& coord) {
    const auto [it, inserted] = index_.emplace(key, static_cast<int>(parent_.size()));
    if (inserted) {
      parent_.push_back(it->second);
      keys_.push_back(key);
      coords_.push_back(coord);
      members_.push_back({{key.image, it->second}});
    }
    return it->second;
  }

  int Find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Returns false when the union would violate one-cell-per-image.
  bool Union(int a, int b) {
    int ra = Find(a);
    int rb = Find(b);
    if (ra == rb) {
      return true;
    }
    if (members_[ra].size() < members_[rb].size()) {
      std::swap(ra, rb);
    }
    for (const auto& [image, node] : members_[rb]) {
      if (members_[ra].count(image)) {
        return false;
      }
    }
    for (const auto& entry : members_[rb]) {
      members_[ra].insert(entry);
    }
    members_[rb].clear();
    parent_[rb] = ra;
    return true;
  }

  std::vector<Track> Tracks() {
    std::map<KeypointId, int> first_key_to_root;
    for (size_t i = 0; i < parent_.size(); ++i) {
      const int root = Find(static_cast<int>(i));
      if (members_[root].size() < 2) {
        continue;
      }
      // Members are keyed by image, so the first one is the smallest key.
      first_key_to_root.emplace(keys_[members_[root].begin()->second], root);
    }
    std::vector<Track> tracks;
    tracks.reserve(first_key_to_root.size());
    for (const auto& [key, root] : first_key_to_root) {
      Track track;
      for (const auto& [image, node] : members_[root]) {
        track.observations[image] = {keys_[node].cell, coords_[node]};
      }
      tracks.push_back(std::move(track));
    }
    return tracks;
  }

 private:
  std::map<KeypointId, int> index_;
  std::vector<int> parent_;
  std::vector<KeypointId> keys_;
  std::vector<ErpPoint> coords_;
  std::vector<std::map<ImageId, int>> members_;
};

}  // namespace

TrackBuildResult BuildTracks(const std::vector<QuantizedPairMatches>& pairs) {
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto key = [&](size_t i) {
    return std::make_pair(std::min(pairs[i].image_a, pairs[i].image_b),
                          std::max(pairs[i].image_a, pairs[i].image_b));
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return key(a) < key(b); });

  TrackForest forest;
  TrackBuildResult result;
  for (const size_t pi : order) {
    const QuantizedPairMatches& pm = pairs[pi];
    if (pm.image_a == pm.image_b) {
      throw DomainError("pair references the same image twice");
    }
    for (const QuantizedMatch& m : pm.matches) {
      const int a = forest.Node({pm.image_a, m.cell_a}, m.source.px_a);
      const int b = forest.Node({pm.image_b, m.cell_b}, m.source.px_b);
      if (forest.Union(a, b)) {
        ++result.used_matches;
      } else {
        ++result.dropped_conflicts;
      }
    }
  }
  result.tracks = forest.Tracks();
  return result;
}

}  // namespace omnisfm
