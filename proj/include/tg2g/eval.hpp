#pragma once

// Downstream temporal link prediction: an MLP classifier over embedding
// pairs, ranking metrics (AP / reciprocal rank), and the attention-weight
// vs node-degree report.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "tg2g/adam.hpp"
#include "tg2g/graph.hpp"
#include "tg2g/models.hpp"
#include "tg2g/tensor.hpp"
#include "tg2g/util.hpp"

namespace tg2g {

// ---------------------------------------------------------------------------
// Link classifier: [mu_i ; mu_j] -> hidden L0 (relu) -> 1 (sigmoid)
// ---------------------------------------------------------------------------

class LinkClassifier {
 public:
  LinkClassifier(std::size_t embed_dim, Rng& rng) : embed_dim_(embed_dim) {
    w1_ = init_uniform({2 * embed_dim, embed_dim}, 2 * embed_dim, rng);
    b1_ = Tensor::zeros({embed_dim}, true);
    w2_ = init_uniform({embed_dim, 1}, embed_dim, rng);
    b2_ = Tensor::zeros({1}, true);
  }

  std::size_t embed_dim() const { return embed_dim_; }
  std::vector<Tensor> params() const { return {w1_, b1_, w2_, b2_}; }
  static const std::vector<std::string>& param_names() {
    static const std::vector<std::string> names = {"w1", "b1", "w2", "b2"};
    return names;
  }

  // logits, (B x 1); monotone in the sigmoid probability
  Tensor logits(const Tensor& pairs) const {
    if (pairs.cols() != 2 * embed_dim_)
      throw shape_error("classifier: input width " + std::to_string(pairs.cols()) +
                        ", expected " + std::to_string(2 * embed_dim_));
    Tensor h = relu(add_rowvec(matmul(pairs, w1_), b1_));
    return add_rowvec(matmul(h, w2_), b2_);
  }

  Tensor probabilities(const Tensor& pairs) const { return sigmoid(logits(pairs)); }

 private:
  std::size_t embed_dim_;
  Tensor w1_, b1_, w2_, b2_;
};

struct ClassifierConfig {
  double lr = 1e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 512;
  std::size_t max_pos_per_timestamp = 2000;  // subsample cap on positive pairs
  double neg_per_pos = 1.0;
  std::uint64_t seed = 1;
};

namespace detail_eval {

struct PairPool {
  std::vector<std::size_t> src, dst, t;
  std::vector<double> label;
  std::size_t n_pos = 0, n_neg = 0;
};

inline PairPool build_pair_pool(const EmbeddingTable& emb, const DynamicGraph& g,
                                std::size_t t_begin, std::size_t t_end,
                                const ClassifierConfig& cfg) {
  PairPool pool;
  for (std::size_t t = t_begin; t < t_end; ++t) {
    const Snapshot& s = g.snapshot(t);
    Rng rng = make_rng(cfg.seed, 0x70616972ULL, t);
    std::vector<std::pair<std::size_t, std::size_t>> pos;
    for (const auto& [i, j, w] : s.edge_list()) {
      pos.push_back({i, j});
      if (!g.directed()) pos.push_back({j, i});
    }
    if (pos.size() > cfg.max_pos_per_timestamp) {
      std::shuffle(pos.begin(), pos.end(), rng);
      pos.resize(cfg.max_pos_per_timestamp);
    }
    const std::size_t n_neg = static_cast<std::size_t>(cfg.neg_per_pos * pos.size());
    for (const auto& [i, j] : pos) {
      pool.src.push_back(i);
      pool.dst.push_back(j);
      pool.t.push_back(t);
      pool.label.push_back(1.0);
    }
    pool.n_pos += pos.size();
    std::uniform_int_distribution<std::size_t> node_dist(0, g.n_global() - 1);
    std::size_t added = 0;
    while (added < n_neg) {
      std::size_t i = node_dist(rng), j = node_dist(rng);
      if (i == j || s.has_edge(i, j)) continue;
      pool.src.push_back(i);
      pool.dst.push_back(j);
      pool.t.push_back(t);
      pool.label.push_back(0.0);
      ++added;
    }
    pool.n_neg += added;
  }
  if (pool.n_pos == 0) throw value_error("train_classifier: no positive pairs in train range");
  return pool;
}

inline Tensor pair_features(const EmbeddingTable& emb, const PairPool& pool,
                            const std::vector<std::size_t>& idx) {
  const std::size_t L = emb.embed_dim;
  std::vector<double> data(idx.size() * 2 * L);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::size_t k = idx[r];
    const auto& mu_t = emb.mu[pool.t[k]];
    std::copy_n(mu_t.begin() + pool.src[k] * L, L, data.begin() + r * 2 * L);
    std::copy_n(mu_t.begin() + pool.dst[k] * L, L, data.begin() + r * 2 * L + L);
  }
  return Tensor::from(std::move(data), {idx.size(), 2 * L});
}

}  // namespace detail_eval

// Weighted binary cross-entropy training on concatenated mean-embedding
// pairs from the train timestamps. Positive-class weight is the pool's
// negative/positive ratio.
inline LinkClassifier train_classifier(const EmbeddingTable& emb, const DynamicGraph& g,
                                       std::size_t t_begin, std::size_t t_end,
                                       const ClassifierConfig& cfg = {}) {
  auto pool = detail_eval::build_pair_pool(emb, g, t_begin, t_end, cfg);
  const double pos_weight =
      pool.n_neg > 0 ? static_cast<double>(pool.n_neg) / static_cast<double>(pool.n_pos) : 1.0;

  Rng init_rng = make_rng(cfg.seed, 0x636c6631ULL);
  LinkClassifier clf(emb.embed_dim, init_rng);
  Adam opt(clf.params(), {.lr = cfg.lr});

  std::vector<std::size_t> order(pool.label.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = make_rng(cfg.seed, 0x636c6632ULL, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
      Tensor x = detail_eval::pair_features(emb, pool, idx);
      Tensor z = clf.logits(x);
      // y=1: w * softplus(-z); y=0: softplus(z)
      std::vector<double> w_pos(idx.size()), w_neg(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const double y = pool.label[idx[r]];
        w_pos[r] = y * pos_weight;
        w_neg[r] = 1.0 - y;
      }
      Tensor loss = scale(
          add(sum(mul(Tensor::from(std::move(w_pos), {idx.size(), 1}), softplus(scale(z, -1.0)))),
              sum(mul(Tensor::from(std::move(w_neg), {idx.size(), 1}), softplus(z)))),
          1.0 / static_cast<double>(idx.size()));
      if (!std::isfinite(loss.item()))
        throw value_error("train_classifier: loss diverged (non-finite)");
      opt.zero_grad();
      backward(loss);
      opt.step();
    }
  }
  return clf;
}

// ---------------------------------------------------------------------------
// Ranking metrics
// ---------------------------------------------------------------------------

// Mean over positive positions k (1-based) of precision@k.
inline double average_precision(const std::vector<int>& ranked_labels) {
  std::size_t hits = 0;
  double sum_prec = 0.0;
  for (std::size_t k = 0; k < ranked_labels.size(); ++k)
    if (ranked_labels[k]) {
      ++hits;
      sum_prec += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  if (hits == 0) throw value_error("average_precision: no positive labels");
  return sum_prec / static_cast<double>(hits);
}

inline double reciprocal_rank(const std::vector<int>& ranked_labels) {
  for (std::size_t k = 0; k < ranked_labels.size(); ++k)
    if (ranked_labels[k]) return 1.0 / static_cast<double>(k + 1);
  throw value_error("reciprocal_rank: no positive labels");
}

struct RankingRecord {
  std::size_t t, node;
  double ap, rr;
};

struct RankingResult {
  std::vector<RankingRecord> records;
  std::vector<double> map_per_t, mrr_per_t;
  double map = 0.0, mrr = 0.0;
  double map_std_t = 0.0, mrr_std_t = 0.0;  // std over test timestamps
};

struct EvalConfig {
  std::size_t neg_factor = 20;        // sampled negatives per positive (large graphs)
  std::size_t exhaustive_limit = 2000;  // use all non-partners when n_global <= limit
  std::uint64_t seed = 1;
};

// Candidate ranking per source node with >= 1 true partner at t; partners
// are out-neighbors for directed graphs. Ties break by node index.
inline RankingResult evaluate(const EmbeddingTable& emb, const LinkClassifier& clf,
                              const DynamicGraph& g, std::size_t t_begin, std::size_t t_end,
                              const EvalConfig& cfg = {}) {
  if (emb.embed_dim != clf.embed_dim())
    throw shape_error("evaluate: embedding dim " + std::to_string(emb.embed_dim) +
                      " vs classifier dim " + std::to_string(clf.embed_dim()));
  if (t_begin >= t_end) throw value_error("evaluate: empty timestamp range");
  const std::size_t L = emb.embed_dim;
  const bool exhaustive = g.n_global() <= cfg.exhaustive_limit;

  RankingResult result;
  for (std::size_t t = t_begin; t < t_end; ++t) {
    const Snapshot& s = g.snapshot(t);
    double ap_sum = 0.0, rr_sum = 0.0;
    std::size_t n_nodes = 0;
    for (std::size_t i = 0; i < g.n_global(); ++i) {
      std::vector<bool> is_partner(g.n_global(), false);
      std::size_t n_pos = 0;
      for (const auto& [j, w] : s.out_neighbors(i))
        if (!is_partner[j]) {
          is_partner[j] = true;
          ++n_pos;
        }
      if (n_pos == 0) continue;  // nodes without true edges are excluded

      std::vector<std::size_t> candidates;
      for (std::size_t j = 0; j < g.n_global(); ++j)
        if (j != i && is_partner[j]) candidates.push_back(j);
      if (exhaustive) {
        for (std::size_t j = 0; j < g.n_global(); ++j)
          if (j != i && !is_partner[j]) candidates.push_back(j);
      } else {
        Rng rng = make_rng(cfg.seed, t * 0x10001ULL + i, 0x6e6567ULL);
        std::uniform_int_distribution<std::size_t> node_dist(0, g.n_global() - 1);
        std::vector<bool> taken(g.n_global(), false);
        std::size_t want = cfg.neg_factor * n_pos, got = 0;
        want = std::min(want, g.n_global() - 1 - n_pos);
        while (got < want) {
          std::size_t j = node_dist(rng);
          if (j == i || is_partner[j] || taken[j]) continue;
          taken[j] = true;
          candidates.push_back(j);
          ++got;
        }
      }

      // batched scoring of [mu_i ; mu_j]
      std::vector<double> feats(candidates.size() * 2 * L);
      const auto& mu_t = emb.mu[t];
      for (std::size_t r = 0; r < candidates.size(); ++r) {
        std::copy_n(mu_t.begin() + i * L, L, feats.begin() + r * 2 * L);
        std::copy_n(mu_t.begin() + candidates[r] * L, L, feats.begin() + r * 2 * L + L);
      }
      Tensor z = clf.logits(Tensor::from(std::move(feats), {candidates.size(), 2 * L}));
      const auto& scores = z.data();

      std::vector<std::size_t> order(candidates.size());
      for (std::size_t r = 0; r < order.size(); ++r) order[r] = r;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return candidates[a] < candidates[b];
      });
      std::vector<int> labels(order.size());
      for (std::size_t r = 0; r < order.size(); ++r) labels[r] = is_partner[candidates[order[r]]];

      const double ap = average_precision(labels);
      const double rr = reciprocal_rank(labels);
      result.records.push_back({t, i, ap, rr});
      ap_sum += ap;
      rr_sum += rr;
      ++n_nodes;
    }
    if (n_nodes > 0) {
      result.map_per_t.push_back(ap_sum / static_cast<double>(n_nodes));
      result.mrr_per_t.push_back(rr_sum / static_cast<double>(n_nodes));
    }
  }

  if (result.map_per_t.empty())
    throw value_error("evaluate: no rankable nodes in test range");
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(s2 / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair<double, double>{m, sd};
  };
  std::tie(result.map, result.map_std_t) = mean_std(result.map_per_t);
  std::tie(result.mrr, result.mrr_std_t) = mean_std(result.mrr_per_t);
  return result;
}

// ---------------------------------------------------------------------------
// Attention-weight / node-degree report
// ---------------------------------------------------------------------------

struct AttentionSnapshot {
  std::size_t t;
  std::vector<double> weights;  // (l+1) x (l+1), rows sum to 1
  std::vector<std::size_t> degrees;  // degree at t-l .. t (0 before history)
};

struct AttentionReport {
  std::size_t node;
  std::vector<AttentionSnapshot> per_timestamp;
  // Spearman correlation between the last attention row and the degree
  // history, averaged over the requested timestamps; empty when every
  // degree history is constant.
  std::optional<double> degree_rank_correlation;
};

inline std::optional<double> spearman(const std::vector<double>& a,
                                      const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < v.size()) {  // average ranks over ties
      std::size_t j = i;
      while (j + 1 < v.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) { ma += ra[i]; mb += rb[i]; }
  ma /= ra.size();
  mb /= rb.size();
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0) return std::nullopt;  // constant input: undefined
  return num / std::sqrt(da * db);
}

inline AttentionReport attention_report(const TransformerG2G& model, const DynamicGraph& g,
                                        std::size_t node,
                                        const std::vector<std::size_t>& timestamps) {
  if (node >= g.n_global()) throw graph_error("attention_report: node out of range");
  const std::size_t l = model.lookback();
  AttentionReport report;
  report.node = node;
  double corr_sum = 0.0;
  std::size_t corr_n = 0;
  for (std::size_t t : timestamps) {
    if (t >= g.n_timestamps()) throw graph_error("attention_report: timestamp out of range");
    Tensor history = build_history(g, t, l, {node});
    auto out = model.forward_batch(history, 1);
    AttentionSnapshot snap;
    snap.t = t;
    snap.weights = out.attn;
    for (std::size_t s = 0; s <= l; ++s) {
      const long long ts = static_cast<long long>(t) - static_cast<long long>(l) +
                           static_cast<long long>(s);
      snap.degrees.push_back(ts < 0 ? 0 : g.snapshot(static_cast<std::size_t>(ts)).degree_und(node));
    }
    // last row: attention paid by the current state to each lag
    std::vector<double> last_row(snap.weights.end() - (l + 1), snap.weights.end());
    std::vector<double> deg(snap.degrees.begin(), snap.degrees.end());
    if (auto c = spearman(last_row, deg)) {
      corr_sum += *c;
      ++corr_n;
    }
    report.per_timestamp.push_back(std::move(snap));
  }
  if (corr_n > 0) report.degree_rank_correlation = corr_sum / static_cast<double>(corr_n);
  return report;
}

}  // namespace tg2g
