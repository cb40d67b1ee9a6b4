#pragma once

// Node-triplet construction for the contrastive loss: per present anchor,
// near partners at exactly 1 hop and far partners at >= 2 hops (including
// present-but-unreachable nodes).

#include <vector>

#include "tg2g/graph.hpp"
#include "tg2g/util.hpp"

namespace tg2g {

struct Triplet {
  std::size_t anchor, near, far;
};

struct TripletBatch {
  std::size_t t = 0;
  std::vector<Triplet> triples;
};

struct TripletConfig {
  std::size_t k_per_anchor = 3;
  std::size_t max_per_snapshot_factor = 10;  // cap: factor * |V_t| triples
  std::size_t max_anchors = 0;               // 0 = all present nodes
};

inline TripletBatch sample_triplets(const Snapshot& s, const TripletConfig& cfg, Rng& rng) {
  if (s.n_edges() == 0) throw graph_error("sample_triplets: snapshot has no edges");
  TripletBatch batch;
  batch.t = s.t();

  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < s.n_global(); ++i)
    if (s.present(i)) anchors.push_back(i);
  const std::size_t cap = cfg.max_per_snapshot_factor * anchors.size();
  if (cfg.max_anchors > 0 && anchors.size() > cfg.max_anchors) {
    std::shuffle(anchors.begin(), anchors.end(), rng);
    anchors.resize(cfg.max_anchors);
    std::sort(anchors.begin(), anchors.end());
  }

  std::vector<std::size_t> fars;
  for (std::size_t a : anchors) {
    const auto dist = hop_distance(s, a);
    const auto near_nb = s.und_neighbors(a);
    if (near_nb.empty()) continue;
    fars.clear();
    for (std::size_t v = 0; v < s.n_global(); ++v)
      if (v != a && s.present(v) && (dist[v] == kUnreachable || dist[v] >= 2)) fars.push_back(v);
    if (fars.empty()) continue;  // e.g. complete graphs
    std::uniform_int_distribution<std::size_t> pick_near(0, near_nb.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_far(0, fars.size() - 1);
    for (std::size_t k = 0; k < cfg.k_per_anchor && batch.triples.size() < cap; ++k)
      batch.triples.push_back({a, near_nb[pick_near(rng)], fars[pick_far(rng)]});
    if (batch.triples.size() >= cap) break;
  }
  return batch;
}

// True iff every triple satisfies the strict distance ordering
// sp(anchor, near) < sp(anchor, far) against a fresh BFS, with the anchor
// present at t.
inline bool validate_batch(const TripletBatch& b, const Snapshot& s) {
  if (b.t != s.t()) return false;
  for (const auto& tr : b.triples) {
    if (tr.anchor >= s.n_global() || tr.near >= s.n_global() || tr.far >= s.n_global())
      return false;
    if (!s.present(tr.anchor)) return false;
    const auto dist = hop_distance(s, tr.anchor);
    const int dn = dist[tr.near];
    const int df = dist[tr.far];
    if (dn == kUnreachable) return false;
    if (df != kUnreachable && df <= dn) return false;
  }
  return true;
}

}  // namespace tg2g
