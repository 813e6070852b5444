#pragma once

// Track formation from pairwise matches: connected components of the match
// graph, dropping any component that sees the same camera twice.

#include "dac/geometry/camera.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace dac {

struct FeatureRef {
  std::size_t cam{0};
  std::size_t idx{0};
  auto operator<=>(const FeatureRef&) const = default;
};

struct PairwiseMatch {
  FeatureRef a;
  FeatureRef b;
};

/// Observations of one 3D point in distinct cameras.
struct Track {
  std::vector<Observation> observations;
  std::optional<Point3> point;
};

/// Union-find over features. Components are returned with features sorted,
/// components ordered by their first feature.
inline std::vector<std::vector<FeatureRef>> build_tracks(std::span<const PairwiseMatch> matches) {
  std::map<FeatureRef, std::size_t> index;
  std::vector<FeatureRef> nodes;
  auto id_of = [&](const FeatureRef& f) {
    auto [it, inserted] = index.emplace(f, nodes.size());
    if (inserted) nodes.push_back(f);
    return it->second;
  };
  std::vector<std::size_t> parent;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& m : matches) {
    if (m.a.cam == m.b.cam) throw std::invalid_argument("build_tracks: match within a single camera");
    const std::size_t ia = id_of(m.a);
    const std::size_t ib = id_of(m.b);
    while (parent.size() < nodes.size()) parent.push_back(parent.size());
    const std::size_t ra = find(ia);
    const std::size_t rb = find(ib);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }

  std::map<std::size_t, std::vector<FeatureRef>> groups;
  for (std::size_t i = 0; i < nodes.size(); ++i) groups[find(i)].push_back(nodes[i]);

  std::vector<std::vector<FeatureRef>> out;
  for (auto& [root, feats] : groups) {
    std::sort(feats.begin(), feats.end());
    bool conflict = false;
    for (std::size_t i = 1; i < feats.size(); ++i) conflict |= feats[i].cam == feats[i - 1].cam;
    if (!conflict) out.push_back(std::move(feats));
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.front() < y.front(); });
  return out;
}

/// Turns feature references into observations; `lookup(ref)` returns the
/// measurement for a feature.
template <typename Lookup>
Track make_track(std::span<const FeatureRef> refs, Lookup&& lookup) {
  Track t;
  for (const auto& r : refs) {
    Observation o = lookup(r);
    o.cam_index = r.cam;
    t.observations.push_back(o);
  }
  return t;
}

}  // namespace dac
