#pragma once

// Dynamics diagnostics: temporal edge appearance (TEA) counts with the
// novelty index, and cosine-similarity profiles between a snapshot and its
// recent predecessors.

#include <cmath>
#include <unordered_set>
#include <vector>

#include "tg2g/graph.hpp"

namespace tg2g {

struct TeaProfile {
  // one entry per non-empty snapshot, in chronological order
  std::vector<std::size_t> timestamps;
  std::vector<std::size_t> new_edges;
  std::vector<std::size_t> repeated_edges;
  double novelty = 0.0;  // mean fraction of never-before-seen edges
};

// Edge identity is the canonical pair (ordered for directed graphs,
// unordered otherwise). Snapshots with zero edges are skipped and do not
// count toward the average.
inline TeaProfile tea(const DynamicGraph& g) {
  TeaProfile p;
  std::unordered_set<std::uint64_t> seen;
  double ratio_sum = 0.0;
  for (std::size_t t = 0; t < g.n_timestamps(); ++t) {
    const auto keys = g.snapshot(t).edge_keys();
    if (keys.empty()) continue;
    std::size_t fresh = 0;
    for (auto k : keys) fresh += seen.find(k) == seen.end();
    p.timestamps.push_back(t);
    p.new_edges.push_back(fresh);
    p.repeated_edges.push_back(keys.size() - fresh);
    ratio_sum += static_cast<double>(fresh) / static_cast<double>(keys.size());
    seen.insert(keys.begin(), keys.end());
  }
  if (p.timestamps.empty()) throw graph_error("tea: graph has no edges");
  p.novelty = ratio_sum / static_cast<double>(p.timestamps.size());
  return p;
}

// Cosine similarity between the vectorized binarized adjacency of two
// snapshots. For 0/1 vectors this is |intersection| / sqrt(|E_a| |E_b|);
// the symmetric double-counting for undirected graphs cancels. Zero
// adjacency gives similarity 0.
inline double snapshot_cosine(const Snapshot& a, const Snapshot& b) {
  const auto ka = a.edge_keys();
  const auto kb = b.edge_keys();
  if (ka.empty() || kb.empty()) return 0.0;
  std::size_t inter = 0;
  std::size_t i = 0, j = 0;
  while (i < ka.size() && j < kb.size()) {
    if (ka[i] == kb[j]) { ++inter; ++i; ++j; }
    else if (ka[i] < kb[j]) ++i;
    else ++j;
  }
  return static_cast<double>(inter) /
         std::sqrt(static_cast<double>(ka.size()) * static_cast<double>(kb.size()));
}

struct CosineProfile {
  std::vector<std::size_t> anchors;
  // sim[a][k-1] = cosine(A_t, A_{t-k}) for anchor t = anchors[a], k = 1..window
  std::vector<std::vector<double>> sim;
  std::vector<double> average;  // mean curve over anchors
};

inline CosineProfile cosine_profile(const DynamicGraph& g, const std::vector<std::size_t>& anchors,
                                    std::size_t window) {
  CosineProfile p;
  p.anchors = anchors;
  p.average.assign(window, 0.0);
  for (std::size_t t : anchors) {
    if (t < window || t >= g.n_timestamps())
      throw graph_error("cosine_profile: anchor " + std::to_string(t) +
                        " out of range for window " + std::to_string(window));
    std::vector<double> row(window);
    for (std::size_t k = 1; k <= window; ++k)
      row[k - 1] = snapshot_cosine(g.snapshot(t), g.snapshot(t - k));
    for (std::size_t k = 0; k < window; ++k) p.average[k] += row[k];
    p.sim.push_back(std::move(row));
  }
  if (!anchors.empty())
    for (auto& v : p.average) v /= static_cast<double>(anchors.size());
  return p;
}

}  // namespace tg2g
