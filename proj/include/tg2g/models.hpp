#pragma once

// Embedding models: the static Gaussian (G2G) encoder, its multi-step
// warm-started dynamic variant, and the transformer encoder over node
// history. All share the Gaussian-KL triplet contrastive loss.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tg2g/adam.hpp"
#include "tg2g/graph.hpp"
#include "tg2g/sampling.hpp"
#include "tg2g/tensor.hpp"
#include "tg2g/util.hpp"

namespace tg2g {

constexpr double kVarFloor = 1e-14;  // variance head: elu(x) + 1 + kVarFloor

struct GaussianEmbedding {
  std::vector<double> mu;
  std::vector<double> var;
};

// ---------------------------------------------------------------------------
// KL divergence and triplet loss
// ---------------------------------------------------------------------------

// D_KL(p || q) for diagonal Gaussians:
// 1/2 sum_k [ var_p/var_q + (mu_q - mu_p)^2/var_q - 1 + ln var_q - ln var_p ]
inline double kl_divergence(const GaussianEmbedding& p, const GaussianEmbedding& q) {
  if (p.mu.size() != q.mu.size() || p.mu.size() != p.var.size() || q.mu.size() != q.var.size())
    throw shape_error("kl_divergence: dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < p.mu.size(); ++k) {
    if (p.var[k] <= 0.0 || q.var[k] <= 0.0) throw value_error("kl_divergence: nonpositive variance");
    const double diff = q.mu[k] - p.mu[k];
    s += p.var[k] / q.var[k] + diff * diff / q.var[k] - 1.0 + std::log(q.var[k]) -
         std::log(p.var[k]);
  }
  return 0.5 * s;
}

// Differentiable per-row KL between gathered rows of (mu, var) matrices.
// Result is (rows x 1).
inline Tensor kl_rows(const Tensor& mu_p, const Tensor& var_p, const Tensor& mu_q,
                      const Tensor& var_q) {
  Tensor ratio = div(var_p, var_q);
  Tensor diff = sub(mu_q, mu_p);
  Tensor maha = div(square(diff), var_q);
  Tensor logs = sub(log_t(var_q), log_t(var_p));
  Tensor per_elem = add_scalar(add(add(ratio, maha), logs), -1.0);
  return scale(sum_rows(per_elem), 0.5);
}

// Triplet contrastive loss: sum over triples of
// KL(anchor||near)^2 + exp(-KL(anchor||far)).
// mu/var rows are indexed by `index_of` applied to triple node ids.
inline Tensor triplet_loss(const Tensor& mu, const Tensor& var, const TripletBatch& batch,
                           const std::function<std::size_t(std::size_t)>& index_of) {
  if (batch.triples.empty()) throw value_error("triplet_loss: empty batch");
  std::vector<std::size_t> ia, in, ifar;
  ia.reserve(batch.triples.size());
  for (const auto& tr : batch.triples) {
    ia.push_back(index_of(tr.anchor));
    in.push_back(index_of(tr.near));
    ifar.push_back(index_of(tr.far));
  }
  Tensor mu_a = gather_rows(mu, ia), var_a = gather_rows(var, ia);
  Tensor mu_n = gather_rows(mu, in), var_n = gather_rows(var, in);
  Tensor mu_f = gather_rows(mu, ifar), var_f = gather_rows(var, ifar);
  Tensor kl_near = kl_rows(mu_a, var_a, mu_n, var_n);
  Tensor kl_far = kl_rows(mu_a, var_a, mu_f, var_f);
  return sum(add(square(kl_near), exp_t(scale(kl_far, -1.0))));
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t lookback = 1;   // l; input sequence length is l+1
  std::size_t d = 256;        // transformer model width
  std::size_t d_ff = 1024;    // feed-forward inner width
  std::size_t hidden = 512;   // post-encoder / G2G hidden width
  std::size_t embed_dim = 64; // L0
  double lr = 1e-4;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  std::vector<double> thetas = {1.0};  // warm-start coefficients, newest first
  TripletConfig triplets;

  void validate() const {
    if (thetas.empty() || thetas.size() > 3)
      throw value_error("config: thetas length must be 1..3");
    double s = 0.0;
    for (double t : thetas) s += t;
    if (std::fabs(s - 1.0) > 1e-9)
      throw value_error("config: thetas must sum to 1, got " + std::to_string(s));
    if (lr <= 0.0) throw value_error("config: lr must be positive");
    if (d % 2 != 0) throw value_error("config: d must be even for positional encoding");
    if (embed_dim == 0 || hidden == 0 || d == 0 || d_ff == 0)
      throw value_error("config: zero layer width");
  }
};

// ---------------------------------------------------------------------------
// Positional encoding
// ---------------------------------------------------------------------------

// PE(pos, 2i) = sin(pos / 10000^{2i/d}), PE(pos, 2i+1) = cos(pos / 10000^{2i/d})
inline std::vector<double> positional_encoding(std::size_t l_plus_1, std::size_t d) {
  if (d % 2 != 0) throw value_error("positional_encoding: d must be even");
  std::vector<double> pe(l_plus_1 * d);
  for (std::size_t pos = 0; pos < l_plus_1; ++pos)
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      pe[pos * d + 2 * i] = std::sin(static_cast<double>(pos) * freq);
      pe[pos * d + 2 * i + 1] = std::cos(static_cast<double>(pos) * freq);
    }
  return pe;
}

// Scaled dot-product attention over one sequence; returns output and the
// row-stochastic weight matrix.
inline std::pair<Tensor, std::vector<double>> attention(const Tensor& q, const Tensor& k,
                                                        const Tensor& v) {
  std::vector<double> weights;
  Tensor out = block_attention(q, k, v, q.rows(), &weights);
  return {std::move(out), std::move(weights)};
}

// ---------------------------------------------------------------------------
// G2G encoder (static snapshots)
// ---------------------------------------------------------------------------

class G2GEncoder {
 public:
  G2GEncoder(std::size_t n_in, std::size_t hidden, std::size_t embed_dim, Rng& rng)
      : n_in_(n_in), hidden_(hidden), embed_dim_(embed_dim) {
    w1_ = init_uniform({n_in, hidden}, n_in, rng);
    b1_ = Tensor::zeros({hidden}, true);
    w_mu_ = init_uniform({hidden, embed_dim}, hidden, rng);
    b_mu_ = Tensor::zeros({embed_dim}, true);
    w_sig_ = init_uniform({hidden, embed_dim}, hidden, rng);
    b_sig_ = Tensor::zeros({embed_dim}, true);
  }

  std::size_t n_in() const { return n_in_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t embed_dim() const { return embed_dim_; }

  std::vector<Tensor> params() const { return {w1_, b1_, w_mu_, b_mu_, w_sig_, b_sig_}; }

  static const std::vector<std::string>& param_names() {
    static const std::vector<std::string> names = {"w1", "b1", "w_mu", "b_mu", "w_sig", "b_sig"};
    return names;
  }

  // rows: (B x n_in) -> mu (B x L0), var (B x L0), var > 0 by construction
  std::pair<Tensor, Tensor> forward(const Tensor& rows) const {
    detail::check_finite(rows, "g2g_forward");
    Tensor h = relu(add_rowvec(matmul(rows, w1_), b1_));
    Tensor mu = add_rowvec(matmul(h, w_mu_), b_mu_);
    Tensor var = add_scalar(elu(add_rowvec(matmul(h, w_sig_), b_sig_)), 1.0 + kVarFloor);
    return {std::move(mu), std::move(var)};
  }

  GaussianEmbedding embed_one(const std::vector<double>& row) const {
    auto [mu, var] = forward(Tensor::from(row, {1, n_in_}));
    return {mu.data(), var.data()};
  }

 private:
  std::size_t n_in_, hidden_, embed_dim_;
  Tensor w1_, b1_, w_mu_, b_mu_, w_sig_, b_sig_;
};

// Convex combination of weight histories: result = sum_k thetas[k] *
// history[k], history newest first. Thetas must sum to 1; with thetas =
// {1} this returns history[0] bitwise.
inline std::vector<Tensor> multistep_init(const std::vector<std::vector<Tensor>>& history,
                                          const std::vector<double>& thetas) {
  if (history.empty() || history.size() != thetas.size())
    throw value_error("multistep_init: history length " + std::to_string(history.size()) +
                      " vs thetas length " + std::to_string(thetas.size()));
  double s = 0.0;
  for (double t : thetas) s += t;
  if (std::fabs(s - 1.0) > 1e-9) throw value_error("multistep_init: thetas must sum to 1");

  std::vector<Tensor> out;
  for (std::size_t p = 0; p < history[0].size(); ++p) {
    const Shape shape = history[0][p].shape();
    std::vector<double> acc = history[0][p].data();
    if (thetas[0] != 1.0)
      for (auto& v : acc) v *= thetas[0];
    for (std::size_t k = 1; k < history.size(); ++k) {
      if (history[k].size() != history[0].size() || history[k][p].shape() != shape)
        throw shape_error("multistep_init: weight shape mismatch across history");
      if (thetas[k] == 0.0) continue;  // keep theta=1 runs bitwise identical
      const auto& w = history[k][p].data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += thetas[k] * w[i];
    }
    out.push_back(Tensor::from(std::move(acc), shape, true));
  }
  return out;
}

// ---------------------------------------------------------------------------
// TransformerG2G
// ---------------------------------------------------------------------------

class TransformerG2G {
 public:
  TransformerG2G(std::size_t n_in, const TrainConfig& cfg, Rng& rng)
      : n_in_(n_in), l_(cfg.lookback), d_(cfg.d), d_ff_(cfg.d_ff), hidden_(cfg.hidden),
        embed_dim_(cfg.embed_dim), pe_(positional_encoding(cfg.lookback + 1, cfg.d)) {
    const std::size_t seq = l_ + 1;
    w_in_ = init_uniform({n_in, d_}, n_in, rng);
    b_in_ = Tensor::zeros({d_}, true);
    w_q_ = init_uniform({d_, d_}, d_, rng);
    b_q_ = Tensor::zeros({d_}, true);
    w_k_ = init_uniform({d_, d_}, d_, rng);
    b_k_ = Tensor::zeros({d_}, true);
    w_v_ = init_uniform({d_, d_}, d_, rng);
    b_v_ = Tensor::zeros({d_}, true);
    w_o_ = init_uniform({d_, d_}, d_, rng);
    b_o_ = Tensor::zeros({d_}, true);
    ln1_g_ = Tensor::full({d_}, 1.0, true);
    ln1_b_ = Tensor::zeros({d_}, true);
    w_ff1_ = init_uniform({d_, d_ff_}, d_, rng);
    b_ff1_ = Tensor::zeros({d_ff_}, true);
    w_ff2_ = init_uniform({d_ff_, d_}, d_ff_, rng);
    b_ff2_ = Tensor::zeros({d_}, true);
    ln2_g_ = Tensor::full({d_}, 1.0, true);
    ln2_b_ = Tensor::zeros({d_}, true);
    w_map_ = init_uniform({seq * d_, hidden_}, seq * d_, rng);
    b_map_ = Tensor::zeros({hidden_}, true);
    w_mu_ = init_uniform({hidden_, embed_dim_}, hidden_, rng);
    b_mu_ = Tensor::zeros({embed_dim_}, true);
    w_sig_ = init_uniform({hidden_, embed_dim_}, hidden_, rng);
    b_sig_ = Tensor::zeros({embed_dim_}, true);
  }

  std::size_t n_in() const { return n_in_; }
  std::size_t lookback() const { return l_; }
  std::size_t d() const { return d_; }
  std::size_t embed_dim() const { return embed_dim_; }

  std::vector<Tensor> params() const {
    return {w_in_, b_in_, w_q_, b_q_, w_k_, b_k_, w_v_, b_v_, w_o_, b_o_, ln1_g_, ln1_b_,
            w_ff1_, b_ff1_, w_ff2_, b_ff2_, ln2_g_, ln2_b_, w_map_, b_map_, w_mu_, b_mu_,
            w_sig_, b_sig_};
  }

  static const std::vector<std::string>& param_names() {
    static const std::vector<std::string> names = {
        "w_in", "b_in", "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o", "ln1_g",
        "ln1_b", "w_ff1", "b_ff1", "w_ff2", "b_ff2", "ln2_g", "ln2_b", "w_map", "b_map",
        "w_mu", "b_mu", "w_sig", "b_sig"};
    return names;
  }

  struct BatchOutput {
    Tensor mu;   // (B x L0)
    Tensor var;  // (B x L0), strictly positive
    std::vector<double> attn;  // B blocks of (l+1) x (l+1), row-stochastic
  };

  // history: (B*(l+1) x n_in), rows grouped per node, oldest timestamp
  // first within each group.
  BatchOutput forward_batch(const Tensor& history, std::size_t batch) const {
    const std::size_t seq = l_ + 1;
    if (history.rows() != batch * seq || history.cols() != n_in_)
      throw shape_error("transformer: history shape " + shape_str(history.shape()) +
                        ", expected [" + std::to_string(batch * seq) + "," +
                        std::to_string(n_in_) + "]");
    detail::check_finite(history, "transformer_forward");

    Tensor x = add_rowvec(matmul(history, w_in_), b_in_);
    // tile the positional table over the batch
    std::vector<double> pe_tile(batch * seq * d_);
    for (std::size_t b = 0; b < batch; ++b)
      std::copy(pe_.begin(), pe_.end(), pe_tile.begin() + b * seq * d_);
    x = add(x, Tensor::from(std::move(pe_tile), {batch * seq, d_}));

    Tensor q = add_rowvec(matmul(x, w_q_), b_q_);
    Tensor k = add_rowvec(matmul(x, w_k_), b_k_);
    Tensor v = add_rowvec(matmul(x, w_v_), b_v_);
    BatchOutput out;
    Tensor a = block_attention(q, k, v, seq, &out.attn);
    a = add_rowvec(matmul(a, w_o_), b_o_);
    x = add(x, a);
    x = add_rowvec(mul_rowvec(layer_norm_rows(x), ln1_g_), ln1_b_);
    Tensor f = relu(add_rowvec(matmul(x, w_ff1_), b_ff1_));
    f = add_rowvec(matmul(f, w_ff2_), b_ff2_);
    x = add(x, f);
    x = add_rowvec(mul_rowvec(layer_norm_rows(x), ln2_g_), ln2_b_);

    Tensor c = reshape(x, {batch, seq * d_});
    Tensor h = tanh_t(add_rowvec(matmul(c, w_map_), b_map_));
    out.mu = add_rowvec(matmul(h, w_mu_), b_mu_);
    out.var = add_scalar(elu(add_rowvec(matmul(h, w_sig_), b_sig_)), 1.0 + kVarFloor);
    return out;
  }

  // Single-node forward: history (l+1 x n_in), oldest first. Returns the
  // embedding and the (l+1)x(l+1) attention matrix.
  std::pair<GaussianEmbedding, std::vector<double>> forward(
      const std::vector<double>& history) const {
    Tensor h = Tensor::from(history, {l_ + 1, n_in_});
    BatchOutput out = forward_batch(h, 1);
    return {{out.mu.data(), out.var.data()}, out.attn};
  }

 private:
  std::size_t n_in_, l_, d_, d_ff_, hidden_, embed_dim_;
  std::vector<double> pe_;
  Tensor w_in_, b_in_, w_q_, b_q_, w_k_, b_k_, w_v_, b_v_, w_o_, b_o_, ln1_g_, ln1_b_,
      w_ff1_, b_ff1_, w_ff2_, b_ff2_, ln2_g_, ln2_b_, w_map_, b_map_, w_mu_, b_mu_, w_sig_,
      b_sig_;
};

// ---------------------------------------------------------------------------
// History assembly
// ---------------------------------------------------------------------------

// Stacked padded-adjacency history for `nodes` at timestamp t: rows
// t-l .. t per node, left-zero rows for pre-history timestamps.
inline Tensor build_history(const DynamicGraph& g, std::size_t t, std::size_t lookback,
                            const std::vector<std::size_t>& nodes) {
  const std::size_t seq = lookback + 1;
  const std::size_t n = g.n_global();
  std::vector<double> data(nodes.size() * seq * n, 0.0);
  for (std::size_t b = 0; b < nodes.size(); ++b)
    for (std::size_t s = 0; s < seq; ++s) {
      const long long ts = static_cast<long long>(t) - static_cast<long long>(lookback) +
                           static_cast<long long>(s);
      if (ts < 0) continue;  // zero padding before history begins
      const auto row = g.snapshot(static_cast<std::size_t>(ts)).padded_row(nodes[b]);
      std::copy(row.begin(), row.end(), data.begin() + (b * seq + s) * n);
    }
  return Tensor::from(std::move(data), {nodes.size() * seq, n});
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EmbeddingTable {
  std::size_t n_nodes = 0;
  std::size_t embed_dim = 0;
  // per timestamp: flat (n_nodes x embed_dim) mu and var
  std::vector<std::vector<double>> mu, var;

  GaussianEmbedding at(std::size_t t, std::size_t node) const {
    GaussianEmbedding e;
    e.mu.assign(mu[t].begin() + node * embed_dim, mu[t].begin() + (node + 1) * embed_dim);
    e.var.assign(var[t].begin() + node * embed_dim, var[t].begin() + (node + 1) * embed_dim);
    return e;
  }
};

struct TrainResult {
  std::vector<double> train_loss;  // per epoch (transformer) or per timestamp (dyng2g)
  std::vector<double> val_loss;
  EmbeddingTable embeddings;
};

namespace detail_train {

// Unique sorted node ids appearing in a batch, plus dense lookup.
inline std::vector<std::size_t> batch_nodes(const TripletBatch& batch,
                                            std::vector<std::size_t>& lookup,
                                            std::size_t n_global) {
  std::vector<bool> used(n_global, false);
  for (const auto& tr : batch.triples) used[tr.anchor] = used[tr.near] = used[tr.far] = true;
  std::vector<std::size_t> nodes;
  lookup.assign(n_global, SIZE_MAX);
  for (std::size_t i = 0; i < n_global; ++i)
    if (used[i]) {
      lookup[i] = nodes.size();
      nodes.push_back(i);
    }
  return nodes;
}

}  // namespace detail_train

// ---------------------------------------------------------------------------
// DynG2G-style training: one encoder per train timestamp, warm-started via
// multistep_init. Val/test embeddings come from the last trained encoder.
// ---------------------------------------------------------------------------

struct DynG2GResult : TrainResult {
  std::optional<G2GEncoder> final_encoder;
};

inline DynG2GResult train_dyng2g(const DynamicGraph& g, const TrainConfig& cfg,
                                 const SplitRanges& ranges, bool warm_start = true,
                                 std::function<void(const std::string&)> log = {}) {
  cfg.validate();
  DynG2GResult result;
  result.embeddings.n_nodes = g.n_global();
  result.embeddings.embed_dim = cfg.embed_dim;
  result.embeddings.mu.resize(g.n_timestamps());
  result.embeddings.var.resize(g.n_timestamps());

  std::vector<std::vector<Tensor>> weight_history;  // newest first
  std::optional<G2GEncoder> encoder;

  auto all_nodes = [&] {
    std::vector<std::size_t> v(g.n_global());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    return v;
  }();

  auto emit = [&](const G2GEncoder& enc, std::size_t t) {
    Tensor rows = build_history(g, t, 0, all_nodes);
    auto [mu, var] = enc.forward(rows);
    result.embeddings.mu[t] = mu.data();
    result.embeddings.var[t] = var.data();
  };

  for (std::size_t t = ranges.train_begin; t < ranges.train_end; ++t) {
    Rng init_rng = make_rng(cfg.seed, 0x67326700ULL, t);
    G2GEncoder enc(g.n_global(), cfg.hidden, cfg.embed_dim, init_rng);
    if (warm_start && !weight_history.empty()) {
      const std::size_t steps = std::min(weight_history.size(), cfg.thetas.size());
      std::vector<double> thetas(cfg.thetas.begin(), cfg.thetas.begin() + steps);
      double s = 0.0;
      for (double v : thetas) s += v;
      if (std::fabs(s - 1.0) > 1e-12)  // renormalize truncated history
        for (auto& v : thetas) v /= s;
      std::vector<std::vector<Tensor>> hist(weight_history.begin(),
                                            weight_history.begin() + steps);
      auto init = multistep_init(hist, thetas);
      auto dst = enc.params();
      for (std::size_t p = 0; p < dst.size(); ++p) dst[p].data() = init[p].data();
    }

    if (g.snapshot(t).n_edges() == 0) {
      if (log) log("timestamp " + std::to_string(t) + " has no edges; skipped");
      result.train_loss.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }

    Adam opt(enc.params(), {.lr = cfg.lr});
    double last_loss = 0.0;
    bool trained = false;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      Rng rng = make_rng(cfg.seed, epoch + 1, t);
      TripletBatch batch = sample_triplets(g.snapshot(t), cfg.triplets, rng);
      if (batch.triples.empty()) continue;
      std::vector<std::size_t> lookup;
      auto nodes = detail_train::batch_nodes(batch, lookup, g.n_global());
      Tensor rows = build_history(g, t, 0, nodes);
      auto [mu, var] = enc.forward(rows);
      Tensor loss = triplet_loss(mu, var, batch, [&](std::size_t i) { return lookup[i]; });
      if (!std::isfinite(loss.item()))
        throw value_error("train_dyng2g: loss diverged (non-finite) at timestamp " +
                          std::to_string(t));
      opt.zero_grad();
      backward(loss);
      opt.step();
      last_loss = loss.item() / static_cast<double>(batch.triples.size());
      trained = true;
    }
    if (!trained) {
      if (log) log("timestamp " + std::to_string(t) + " produced no triplets; skipped");
      result.train_loss.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    result.train_loss.push_back(last_loss);

    emit(enc, t);
    weight_history.insert(weight_history.begin(), enc.params());
    if (weight_history.size() > 3) weight_history.resize(3);
    encoder = enc;
  }

  if (!encoder) throw value_error("train_dyng2g: no timestamp could be trained");
  // unseen (and skipped) timestamps use the last trained encoder
  for (std::size_t t = 0; t < g.n_timestamps(); ++t)
    if (result.embeddings.mu[t].empty()) emit(*encoder, t);
  result.final_encoder = encoder;
  return result;
}

// ---------------------------------------------------------------------------
// TransformerG2G training: a single model over all train timestamps, with
// per-epoch triplet resampling and validation-loss model selection.
// ---------------------------------------------------------------------------

struct TransformerResult : TrainResult {
  std::optional<TransformerG2G> model;
};

inline double transformer_epoch_loss(const TransformerG2G& model, const DynamicGraph& g,
                                     const TrainConfig& cfg, std::size_t t_begin,
                                     std::size_t t_end, std::uint64_t rng_tag) {
  // forward-only loss over a timestamp range with a fixed triplet draw
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = t_begin; t < t_end; ++t) {
    if (g.snapshot(t).n_edges() == 0) continue;
    Rng rng = make_rng(cfg.seed, rng_tag, t);
    TripletBatch batch = sample_triplets(g.snapshot(t), cfg.triplets, rng);
    if (batch.triples.empty()) continue;
    std::vector<std::size_t> lookup;
    auto nodes = detail_train::batch_nodes(batch, lookup, g.n_global());
    Tensor history = build_history(g, t, cfg.lookback, nodes);
    auto out = model.forward_batch(history, nodes.size());
    Tensor loss = triplet_loss(out.mu, out.var, batch, [&](std::size_t i) { return lookup[i]; });
    total += loss.item();
    count += batch.triples.size();
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

inline TransformerResult train_transformer(const DynamicGraph& g, const TrainConfig& cfg,
                                           const SplitRanges& ranges,
                                           std::function<void(const std::string&)> log = {}) {
  cfg.validate();
  Rng init_rng = make_rng(cfg.seed, 0x7472616eULL);
  TransformerG2G model(g.n_global(), cfg, init_rng);
  Adam opt(model.params(), {.lr = cfg.lr});

  TransformerResult result;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_params;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_total = 0.0;
    std::size_t epoch_triples = 0;
    for (std::size_t t = ranges.train_begin; t < ranges.train_end; ++t) {
      if (g.snapshot(t).n_edges() == 0) {
        if (epoch == 0 && log) log("timestamp " + std::to_string(t) + " has no edges; skipped");
        continue;
      }
      Rng rng = make_rng(cfg.seed, epoch + 1, t);
      TripletBatch batch = sample_triplets(g.snapshot(t), cfg.triplets, rng);
      if (batch.triples.empty()) continue;
      std::vector<std::size_t> lookup;
      auto nodes = detail_train::batch_nodes(batch, lookup, g.n_global());
      Tensor history = build_history(g, t, cfg.lookback, nodes);
      auto out = model.forward_batch(history, nodes.size());
      Tensor loss = triplet_loss(out.mu, out.var, batch, [&](std::size_t i) { return lookup[i]; });
      if (!std::isfinite(loss.item()))
        throw value_error("train_transformer: loss diverged (non-finite) at epoch " +
                          std::to_string(epoch) + ", timestamp " + std::to_string(t));
      opt.zero_grad();
      backward(loss);
      opt.step();
      epoch_total += loss.item();
      epoch_triples += batch.triples.size();
    }
    result.train_loss.push_back(epoch_triples > 0 ? epoch_total / epoch_triples : 0.0);

    const double val = ranges.val_begin < ranges.val_end
                           ? transformer_epoch_loss(model, g, cfg, ranges.val_begin,
                                                    ranges.val_end, 0x76616cULL)
                           : result.train_loss.back();
    result.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_params.clear();
      for (const auto& p : model.params()) best_params.push_back(p.data());
    }
    if (log)
      log("epoch " + std::to_string(epoch) + " train " + std::to_string(result.train_loss.back()) +
          " val " + std::to_string(val));
  }

  if (!best_params.empty()) {
    auto ps = model.params();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].data() = best_params[i];
  }

  // embeddings for every (node, timestamp)
  result.embeddings.n_nodes = g.n_global();
  result.embeddings.embed_dim = cfg.embed_dim;
  result.embeddings.mu.resize(g.n_timestamps());
  result.embeddings.var.resize(g.n_timestamps());
  std::vector<std::size_t> all_nodes(g.n_global());
  for (std::size_t i = 0; i < all_nodes.size(); ++i) all_nodes[i] = i;
  for (std::size_t t = 0; t < g.n_timestamps(); ++t) {
    Tensor history = build_history(g, t, cfg.lookback, all_nodes);
    auto out = model.forward_batch(history, all_nodes.size());
    result.embeddings.mu[t] = out.mu.data();
    result.embeddings.var[t] = out.var.data();
  }
  result.model = std::move(model);
  return result;
}

// Emit embeddings for all timestamps from an already-trained transformer.
inline EmbeddingTable embed_all(const TransformerG2G& model, const DynamicGraph& g) {
  EmbeddingTable table;
  table.n_nodes = g.n_global();
  table.embed_dim = model.embed_dim();
  table.mu.resize(g.n_timestamps());
  table.var.resize(g.n_timestamps());
  std::vector<std::size_t> all_nodes(g.n_global());
  for (std::size_t i = 0; i < all_nodes.size(); ++i) all_nodes[i] = i;
  for (std::size_t t = 0; t < g.n_timestamps(); ++t) {
    Tensor history = build_history(g, t, model.lookback(), all_nodes);
    auto out = model.forward_batch(history, all_nodes.size());
    table.mu[t] = out.mu.data();
    table.var[t] = out.var.data();
  }
  return table;
}

}  // namespace tg2g
