#pragma once

// Discrete-time dynamic graphs: snapshots over a shared node universe,
// timestamped edge-list IO, zero-padded adjacency rows, BFS hop distances,
// chronological splits, and the synthetic stochastic-block-model generator.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tg2g/util.hpp"

namespace tg2g {

struct graph_error : std::runtime_error {
  explicit graph_error(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr int kUnreachable = -1;  // infinity sentinel for hop distances

class Snapshot {
 public:
  Snapshot(std::size_t t, std::size_t n_global, bool directed)
      : t_(t), n_global_(n_global), directed_(directed), adj_out_(n_global),
        adj_in_(directed ? n_global : 0) {}

  std::size_t t() const { return t_; }
  std::size_t n_global() const { return n_global_; }
  bool directed() const { return directed_; }
  std::size_t n_edges() const { return n_edges_; }

  // Number of nodes with at least one incident edge.
  std::size_t n_present() const {
    std::size_t c = 0;
    for (std::size_t i = 0; i < n_global_; ++i) c += present(i);
    return c;
  }

  bool present(std::size_t i) const {
    if (!adj_out_[i].empty()) return true;
    return directed_ && !adj_in_[i].empty();
  }

  void add_edge(std::size_t src, std::size_t dst, double weight = 1.0) {
    if (src >= n_global_ || dst >= n_global_)
      throw graph_error("edge endpoint out of range: " + std::to_string(src) + "," +
                        std::to_string(dst) + " with n_global " + std::to_string(n_global_));
    if (src == dst) return;  // self-loops carry no structure here
    if (has_edge(src, dst)) return;
    adj_out_[src].push_back({dst, weight});
    if (directed_) {
      adj_in_[dst].push_back({src, weight});
    } else {
      adj_out_[dst].push_back({src, weight});
    }
    ++n_edges_;
  }

  bool has_edge(std::size_t src, std::size_t dst) const {
    const auto& nb = adj_out_[src];
    for (const auto& [v, w] : nb)
      if (v == dst) return true;
    return false;
  }

  const std::vector<std::pair<std::size_t, double>>& out_neighbors(std::size_t i) const {
    return adj_out_[i];
  }

  const std::vector<std::pair<std::size_t, double>>& in_neighbors(std::size_t i) const {
    return directed_ ? adj_in_[i] : adj_out_[i];
  }

  // Neighbor indices in the undirected view (union of in and out).
  std::vector<std::size_t> und_neighbors(std::size_t i) const {
    std::vector<std::size_t> nb;
    nb.reserve(adj_out_[i].size());
    for (const auto& [v, w] : adj_out_[i]) nb.push_back(v);
    if (directed_) {
      for (const auto& [v, w] : adj_in_[i])
        if (std::find(nb.begin(), nb.end(), v) == nb.end()) nb.push_back(v);
    }
    std::sort(nb.begin(), nb.end());
    return nb;
  }

  std::size_t degree_und(std::size_t i) const { return und_neighbors(i).size(); }

  // Canonical edge keys: ordered pair for directed graphs, sorted pair for
  // undirected. Sorted ascending.
  std::vector<std::uint64_t> edge_keys() const {
    std::vector<std::uint64_t> keys;
    keys.reserve(n_edges_);
    for (std::size_t i = 0; i < n_global_; ++i)
      for (const auto& [j, w] : adj_out_[i]) {
        if (!directed_ && j < i) continue;
        keys.push_back((static_cast<std::uint64_t>(i) << 32) | j);
      }
    std::sort(keys.begin(), keys.end());
    return keys;
  }

  // Edges listed once each: (src, dst, weight); undirected with src <= dst.
  std::vector<std::tuple<std::size_t, std::size_t, double>> edge_list() const {
    std::vector<std::tuple<std::size_t, std::size_t, double>> out;
    out.reserve(n_edges_);
    for (std::size_t i = 0; i < n_global_; ++i)
      for (const auto& [j, w] : adj_out_[i]) {
        if (!directed_ && j < i) continue;
        out.push_back({i, j, w});
      }
    std::sort(out.begin(), out.end());
    return out;
  }

  // The i-th row of the padded adjacency matrix: length n_global, zeros for
  // absent nodes. Out-edges only for directed graphs.
  std::vector<double> padded_row(std::size_t i, bool binarize = true) const {
    if (i >= n_global_) throw graph_error("padded_row: node index " + std::to_string(i) +
                                          " out of range (n_global " + std::to_string(n_global_) + ")");
    std::vector<double> row(n_global_, 0.0);
    for (const auto& [j, w] : adj_out_[i]) row[j] = binarize ? 1.0 : w;
    return row;
  }

  bool operator==(const Snapshot& o) const {
    return t_ == o.t_ && n_global_ == o.n_global_ && directed_ == o.directed_ &&
           edge_list() == o.edge_list();
  }

 private:
  std::size_t t_;
  std::size_t n_global_;
  bool directed_;
  std::size_t n_edges_ = 0;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj_out_;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj_in_;  // directed only
};

// BFS distances from anchor i in the undirected view, capped at max_hops.
// Unreachable nodes keep kUnreachable.
inline std::vector<int> hop_distance(const Snapshot& s, std::size_t i,
                                     std::size_t max_hops = SIZE_MAX) {
  if (i >= s.n_global() || !s.present(i))
    throw graph_error("hop_distance: anchor " + std::to_string(i) + " absent in snapshot");
  std::vector<int> dist(s.n_global(), kUnreachable);
  dist[i] = 0;
  std::queue<std::size_t> q;
  q.push(i);
  while (!q.empty()) {
    std::size_t u = q.front();
    q.pop();
    if (static_cast<std::size_t>(dist[u]) >= max_hops) continue;
    auto relax = [&](std::size_t v) {
      if (dist[v] == kUnreachable) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    };
    for (const auto& [v, w] : s.out_neighbors(u)) relax(v);
    if (s.directed())
      for (const auto& [v, w] : s.in_neighbors(u)) relax(v);
  }
  return dist;
}

class DynamicGraph {
 public:
  DynamicGraph(std::size_t n_global, bool directed) : n_global_(n_global), directed_(directed) {}

  std::size_t n_global() const { return n_global_; }
  bool directed() const { return directed_; }
  std::size_t n_timestamps() const { return snapshots_.size(); }
  const Snapshot& snapshot(std::size_t t) const { return snapshots_.at(t); }
  Snapshot& snapshot(std::size_t t) { return snapshots_.at(t); }
  const std::vector<Snapshot>& snapshots() const { return snapshots_; }

  Snapshot& add_snapshot() {
    snapshots_.emplace_back(snapshots_.size(), n_global_, directed_);
    return snapshots_.back();
  }

  std::size_t total_edges() const {
    std::size_t c = 0;
    for (const auto& s : snapshots_) c += s.n_edges();
    return c;
  }

  std::vector<double> padded_row(std::size_t t, std::size_t i, bool binarize = true) const {
    return snapshot(t).padded_row(i, binarize);
  }

  // external id -> dense index (populated by the loader; generators use
  // identity ids)
  std::unordered_map<std::string, std::size_t> node_ids;

  bool operator==(const DynamicGraph& o) const {
    return n_global_ == o.n_global_ && directed_ == o.directed_ && snapshots_ == o.snapshots_;
  }

 private:
  std::size_t n_global_;
  bool directed_;
  std::vector<Snapshot> snapshots_;
};

// ---------------------------------------------------------------------------
// Edge-list IO
// ---------------------------------------------------------------------------

struct EdgeListOptions {
  bool directed = false;
  bool binarize = true;    // drop weights when forming adjacency rows
  std::size_t n_bins = 0;  // 0: distinct raw timestamps become snapshots;
                           // else uniform-width bins over [min_ts, max_ts]
  bool ids_are_dense = false;  // parse node tokens as already-dense indices
};

struct RawEdge {
  std::string src, dst;
  double ts;
  double weight;
};

inline DynamicGraph load_edge_list(const std::string& path, const EdgeListOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw graph_error("cannot open edge list: " + path);

  std::vector<RawEdge> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    for (auto& c : line)
      if (c == ',' || c == '\t') c = ' ';
    std::istringstream ls(line);
    std::string src, dst;
    if (!(ls >> src)) continue;  // blank line
    if (src[0] == '#') continue;
    double ts, weight = 1.0;
    if (!(ls >> dst >> ts))
      throw graph_error(path + ":" + std::to_string(lineno) + ": malformed edge line: " + line);
    ls >> weight;  // optional
    raw.push_back({std::move(src), std::move(dst), ts, weight});
  }
  if (raw.empty()) throw graph_error("empty edge list: " + path);

  // dense node reindexing
  std::unordered_map<std::string, std::size_t> ids;
  std::size_t n = 0;
  auto intern = [&](const std::string& tok) -> std::size_t {
    if (opt.ids_are_dense) {
      std::size_t v = std::stoull(tok);
      n = std::max(n, v + 1);
      return v;
    }
    auto [it, inserted] = ids.try_emplace(tok, n);
    if (inserted) ++n;
    return it->second;
  };
  struct DenseEdge {
    std::size_t src, dst;
    double ts, weight;
  };
  std::vector<DenseEdge> edges;
  edges.reserve(raw.size());
  for (const auto& e : raw) edges.push_back({intern(e.src), intern(e.dst), e.ts, e.weight});

  // timestamp binning
  double ts_min = edges[0].ts, ts_max = edges[0].ts;
  for (const auto& e : edges) {
    ts_min = std::min(ts_min, e.ts);
    ts_max = std::max(ts_max, e.ts);
  }
  std::vector<std::size_t> bin_of(edges.size());
  std::size_t n_snapshots;
  if (opt.n_bins == 0) {
    std::vector<double> distinct;
    for (const auto& e : edges) distinct.push_back(e.ts);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (std::size_t i = 0; i < edges.size(); ++i)
      bin_of[i] = std::lower_bound(distinct.begin(), distinct.end(), edges[i].ts) - distinct.begin();
    n_snapshots = distinct.size();
  } else {
    n_snapshots = opt.n_bins;
    const double width = (ts_max - ts_min) / static_cast<double>(opt.n_bins);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      std::size_t b = width > 0.0
                          ? std::min<std::size_t>(opt.n_bins - 1,
                                                  static_cast<std::size_t>((edges[i].ts - ts_min) / width))
                          : 0;
      bin_of[i] = b;
    }
  }

  DynamicGraph g(n, opt.directed);
  if (!opt.ids_are_dense) g.node_ids = std::move(ids);
  for (std::size_t t = 0; t < n_snapshots; ++t) g.add_snapshot();
  for (std::size_t i = 0; i < edges.size(); ++i)
    g.snapshot(bin_of[i]).add_edge(edges[i].src, edges[i].dst,
                                   opt.binarize ? 1.0 : edges[i].weight);
  return g;
}

inline void save_edge_list(const DynamicGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw graph_error("cannot write edge list: " + path);
  out << "# src dst timestamp weight\n";
  for (std::size_t t = 0; t < g.n_timestamps(); ++t)
    for (const auto& [i, j, w] : g.snapshot(t).edge_list())
      out << i << ' ' << j << ' ' << t << ' ' << w << '\n';
}

// ---------------------------------------------------------------------------
// Train/val/test split
// ---------------------------------------------------------------------------

struct SplitSpec {
  std::size_t n_train, n_val, n_test;

  // 70/10/20 by rounding, remainder to test (matches the published per-
  // dataset counts).
  static SplitSpec fractions(std::size_t n_timestamps, double f_train = 0.7,
                             double f_val = 0.1) {
    std::size_t tr = static_cast<std::size_t>(std::llround(f_train * n_timestamps));
    std::size_t va = static_cast<std::size_t>(std::llround(f_val * n_timestamps));
    if (tr + va > n_timestamps) throw graph_error("split fractions exceed timestamp count");
    return {tr, va, n_timestamps - tr - va};
  }
};

struct SplitRanges {
  // half-open index ranges
  std::size_t train_begin, train_end;
  std::size_t val_begin, val_end;
  std::size_t test_begin, test_end;
};

inline SplitRanges split(const DynamicGraph& g, const SplitSpec& spec) {
  if (spec.n_train + spec.n_val + spec.n_test != g.n_timestamps())
    throw graph_error("split spec sums to " +
                      std::to_string(spec.n_train + spec.n_val + spec.n_test) + " but graph has " +
                      std::to_string(g.n_timestamps()) + " timestamps");
  SplitRanges r;
  r.train_begin = 0;
  r.train_end = spec.n_train;
  r.val_begin = r.train_end;
  r.val_end = r.val_begin + spec.n_val;
  r.test_begin = r.val_end;
  r.test_end = r.test_begin + spec.n_test;
  return r;
}

// ---------------------------------------------------------------------------
// Stochastic block model generator
// ---------------------------------------------------------------------------

struct SbmParams {
  std::size_t n_nodes = 1000;
  std::size_t n_communities = 3;
  double p_in = 0.2;
  double p_out = 0.01;
  std::size_t n_timestamps = 50;
  std::size_t migrate_min = 10;
  std::size_t migrate_max = 20;
  std::uint64_t seed = 1;
};

// Snapshot 1 is a fresh SBM draw. Each later snapshot keeps the previous
// edges except those incident to the nodes migrated that step, whose edges
// are redrawn under the new community assignment. This persistence is what
// gives the benchmark its low novelty index.
inline DynamicGraph generate_sbm(const SbmParams& p) {
  if (p.p_in < 0.0 || p.p_in > 1.0 || p.p_out < 0.0 || p.p_out > p.p_in)
    throw graph_error("sbm: need 0 <= p_out <= p_in <= 1");
  if (p.n_communities == 0 || p.n_communities > p.n_nodes)
    throw graph_error("sbm: need 1 <= n_communities <= n_nodes");
  if (p.migrate_min > p.migrate_max || p.migrate_max >= p.n_nodes)
    throw graph_error("sbm: invalid migration range");
  if (p.n_timestamps == 0) throw graph_error("sbm: need at least one timestamp");

  Rng rng = make_rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // contiguous blocks, as equal as possible
  std::vector<std::size_t> community(p.n_nodes);
  for (std::size_t i = 0; i < p.n_nodes; ++i) community[i] = i * p.n_communities / p.n_nodes;

  auto edge_prob = [&](std::size_t u, std::size_t v) {
    return community[u] == community[v] ? p.p_in : p.p_out;
  };

  DynamicGraph g(p.n_nodes, /*directed=*/false);

  // full draw for the first snapshot
  Snapshot& first = g.add_snapshot();
  for (std::size_t u = 0; u < p.n_nodes; ++u)
    for (std::size_t v = u + 1; v < p.n_nodes; ++v)
      if (unit(rng) < edge_prob(u, v)) first.add_edge(u, v);

  for (std::size_t t = 1; t < p.n_timestamps; ++t) {
    // pick distinct migrants and move each to a different community
    std::uniform_int_distribution<std::size_t> count_dist(p.migrate_min, p.migrate_max);
    const std::size_t n_migrate = count_dist(rng);
    std::vector<std::size_t> migrants;
    std::vector<bool> is_migrant(p.n_nodes, false);
    std::uniform_int_distribution<std::size_t> node_dist(0, p.n_nodes - 1);
    while (migrants.size() < n_migrate) {
      std::size_t u = node_dist(rng);
      if (!is_migrant[u]) {
        is_migrant[u] = true;
        migrants.push_back(u);
      }
    }
    std::uniform_int_distribution<std::size_t> shift_dist(1, p.n_communities - 1);
    for (std::size_t u : migrants)
      community[u] = (community[u] + shift_dist(rng)) % p.n_communities;

    // copy before add_snapshot: growing the snapshot vector may reallocate
    const auto prev_edges = g.snapshot(t - 1).edge_list();
    Snapshot& cur = g.add_snapshot();
    // keep edges not touching a migrant
    for (const auto& [u, v, w] : prev_edges)
      if (!is_migrant[u] && !is_migrant[v]) cur.add_edge(u, v, w);
    // redraw all pairs involving a migrant (each unordered pair once)
    for (std::size_t u : migrants)
      for (std::size_t v = 0; v < p.n_nodes; ++v) {
        if (v == u) continue;
        if (is_migrant[v] && v < u) continue;
        if (unit(rng) < edge_prob(u, v)) cur.add_edge(u, v);
      }
  }
  return g;
}

}  // namespace tg2g
