#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "tg2g/models.hpp"

using namespace tg2g;

namespace {

GaussianEmbedding random_gaussian(std::size_t dim, Rng& rng) {
  std::uniform_real_distribution<double> mu_d(-2.0, 2.0), var_d(0.2, 3.0);
  GaussianEmbedding e;
  for (std::size_t k = 0; k < dim; ++k) {
    e.mu.push_back(mu_d(rng));
    e.var.push_back(var_d(rng));
  }
  return e;
}

// Monte-Carlo KL: E_{x~p}[log p(x) - log q(x)]; returns (estimate, stderr)
std::pair<double, double> kl_monte_carlo(const GaussianEmbedding& p, const GaussianEmbedding& q,
                                         std::size_t n_samples, Rng& rng) {
  std::normal_distribution<double> std_normal(0.0, 1.0);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    double log_ratio = 0.0;
    for (std::size_t k = 0; k < p.mu.size(); ++k) {
      const double x = p.mu[k] + std::sqrt(p.var[k]) * std_normal(rng);
      const double zp = x - p.mu[k], zq = x - q.mu[k];
      log_ratio += -0.5 * (zp * zp / p.var[k] + std::log(p.var[k])) +
                   0.5 * (zq * zq / q.var[k] + std::log(q.var[k]));
    }
    sum += log_ratio;
    sum_sq += log_ratio * log_ratio;
  }
  const double mean = sum / n_samples;
  const double var = (sum_sq / n_samples - mean * mean) / n_samples;
  return {mean, std::sqrt(std::max(var, 0.0))};
}

DynamicGraph tiny_sbm(std::uint64_t seed = 11) {
  SbmParams p{.n_nodes = 24, .n_communities = 3, .p_in = 0.7, .p_out = 0.05,
              .n_timestamps = 8, .migrate_min = 1, .migrate_max = 2, .seed = seed};
  return generate_sbm(p);
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.lookback = 1;
  cfg.d = 8;
  cfg.d_ff = 16;
  cfg.hidden = 8;
  cfg.embed_dim = 4;
  cfg.lr = 1e-3;
  cfg.epochs = 5;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("kl of a distribution with itself is zero") {
  Rng rng = make_rng(1);
  auto p = random_gaussian(6, rng);
  CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kl hand values") {
  // N(0,1) vs N(1,1): 0.5 * (1-0)^2 = 0.5 exactly
  GaussianEmbedding p{{0.0}, {1.0}}, q{{1.0}, {1.0}};
  CHECK(kl_divergence(p, q) == doctest::Approx(0.5).epsilon(1e-12));
  // N(0,1) vs N(0,2): (ln 2 - 1/2) / 2 = 0.09657...
  GaussianEmbedding r{{0.0}, {2.0}};
  CHECK(kl_divergence(p, r) == doctest::Approx(0.5 * (std::log(2.0) - 0.5)).epsilon(1e-12));
  CHECK(kl_divergence(p, r) == doctest::Approx(0.09657).epsilon(1e-4));
}

TEST_CASE("kl is nonnegative and generally asymmetric") {
  Rng rng = make_rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = random_gaussian(4, rng);
    auto q = random_gaussian(4, rng);
    CHECK(kl_divergence(p, q) >= 0.0);
  }
  GaussianEmbedding p{{0.0}, {1.0}}, q{{0.0}, {2.0}};
  CHECK(kl_divergence(p, q) != kl_divergence(q, p));
}

TEST_CASE("kl rejects invalid inputs") {
  GaussianEmbedding p{{0.0}, {1.0}};
  CHECK_THROWS_AS(kl_divergence(p, GaussianEmbedding{{0.0, 1.0}, {1.0, 1.0}}), shape_error);
  CHECK_THROWS_AS(kl_divergence(p, GaussianEmbedding{{0.0}, {0.0}}), value_error);
  CHECK_THROWS_AS(kl_divergence(p, GaussianEmbedding{{0.0}, {-1.0}}), value_error);
}

TEST_CASE("kl matches monte-carlo estimate") {
  Rng rng = make_rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = random_gaussian(3, rng);
    auto q = random_gaussian(3, rng);
    const double exact = kl_divergence(p, q);
    auto [est, se] = kl_monte_carlo(p, q, 200000, rng);
    CHECK(std::fabs(est - exact) < 4.0 * se + 1e-6);
  }
}

TEST_CASE("tensor-route kl matches the scalar formula") {
  Rng rng = make_rng(4);
  const std::size_t rows = 5, dim = 4;
  std::vector<double> mu_p, var_p, mu_q, var_q;
  std::vector<GaussianEmbedding> ps, qs;
  for (std::size_t r = 0; r < rows; ++r) {
    ps.push_back(random_gaussian(dim, rng));
    qs.push_back(random_gaussian(dim, rng));
    mu_p.insert(mu_p.end(), ps.back().mu.begin(), ps.back().mu.end());
    var_p.insert(var_p.end(), ps.back().var.begin(), ps.back().var.end());
    mu_q.insert(mu_q.end(), qs.back().mu.begin(), qs.back().mu.end());
    var_q.insert(var_q.end(), qs.back().var.begin(), qs.back().var.end());
  }
  Tensor kl = kl_rows(Tensor::from(mu_p, {rows, dim}), Tensor::from(var_p, {rows, dim}),
                      Tensor::from(mu_q, {rows, dim}), Tensor::from(var_q, {rows, dim}));
  REQUIRE(kl.shape() == Shape{rows, 1});
  for (std::size_t r = 0; r < rows; ++r)
    CHECK(kl.data()[r] == doctest::Approx(kl_divergence(ps[r], qs[r])).epsilon(1e-12));
}

TEST_CASE("triplet loss matches a scalar recomputation") {
  Rng rng = make_rng(5);
  const std::size_t n = 6, dim = 3;
  std::vector<GaussianEmbedding> emb;
  std::vector<double> mu_flat, var_flat;
  for (std::size_t i = 0; i < n; ++i) {
    emb.push_back(random_gaussian(dim, rng));
    mu_flat.insert(mu_flat.end(), emb.back().mu.begin(), emb.back().mu.end());
    var_flat.insert(var_flat.end(), emb.back().var.begin(), emb.back().var.end());
  }
  TripletBatch batch;
  batch.triples = {{0, 1, 2}, {3, 4, 5}, {1, 0, 4}};
  Tensor loss = triplet_loss(Tensor::from(mu_flat, {n, dim}), Tensor::from(var_flat, {n, dim}),
                             batch, [](std::size_t i) { return i; });
  double expect = 0.0;
  for (const auto& tr : batch.triples) {
    const double kn = kl_divergence(emb[tr.anchor], emb[tr.near]);
    const double kf = kl_divergence(emb[tr.anchor], emb[tr.far]);
    expect += kn * kn + std::exp(-kf);
  }
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("triplet loss gradients pass finite differences") {
  Rng rng = make_rng(6);
  const std::size_t n = 5, dim = 3;
  std::uniform_real_distribution<double> mu_d(-1.0, 1.0), var_d(0.5, 2.0);
  std::vector<double> mu_flat(n * dim), var_flat(n * dim);
  for (auto& v : mu_flat) v = mu_d(rng);
  for (auto& v : var_flat) v = var_d(rng);
  TripletBatch batch;
  batch.triples = {{0, 1, 2}, {2, 3, 4}, {4, 0, 1}};
  Tensor var_fixed = Tensor::from(var_flat, {n, dim});
  double err_mu = grad_check(
      [&](const Tensor& m) {
        return triplet_loss(m, var_fixed, batch, [](std::size_t i) { return i; });
      },
      Tensor::from(mu_flat, {n, dim}), 1e-5);
  CHECK(err_mu < 1e-4);
  Tensor mu_fixed = Tensor::from(mu_flat, {n, dim});
  double err_var = grad_check(
      [&](const Tensor& v) {
        return triplet_loss(mu_fixed, v, batch, [](std::size_t i) { return i; });
      },
      Tensor::from(var_flat, {n, dim}), 1e-5);
  CHECK(err_var < 1e-4);
}

TEST_CASE("positional encoding values and ranges") {
  const std::size_t d = 6;
  auto pe = positional_encoding(3, d);
  // position 0: sin(0)=0, cos(0)=1 alternating
  for (std::size_t i = 0; i < d / 2; ++i) {
    CHECK(pe[2 * i] == 0.0);
    CHECK(pe[2 * i + 1] == 1.0);
  }
  // position 1, channel 0: sin(1), cos(1)
  CHECK(pe[d] == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(pe[d + 1] == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
  // position 2, channel pair 1: frequency 10000^{-2/6}
  const double f = std::pow(10000.0, -2.0 / 6.0);
  CHECK(pe[2 * d + 2] == doctest::Approx(std::sin(2.0 * f)).epsilon(1e-12));
  CHECK(pe[2 * d + 3] == doctest::Approx(std::cos(2.0 * f)).epsilon(1e-12));
  for (double v : pe) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(positional_encoding(2, 5), value_error);
}

TEST_CASE("multistep init with theta=1 is a bitwise copy") {
  Rng rng = make_rng(7);
  std::vector<Tensor> w = {init_uniform({3, 4}, 3, rng), init_uniform({4}, 4, rng)};
  auto out = multistep_init({w}, {1.0});
  REQUIRE(out.size() == 2);
  for (std::size_t p = 0; p < 2; ++p) {
    CHECK(out[p].shape() == w[p].shape());
    CHECK(out[p].data() == w[p].data());  // exact, not approximate
  }
}

TEST_CASE("multistep init blends histories convexly") {
  Tensor a = Tensor::from({1.0, 2.0}, {2});
  Tensor b = Tensor::from({3.0, 6.0}, {2});
  auto out = multistep_init({{a}, {b}}, {0.75, 0.25});
  CHECK(out[0].data()[0] == doctest::Approx(0.75 * 1.0 + 0.25 * 3.0).epsilon(1e-12));
  CHECK(out[0].data()[1] == doctest::Approx(0.75 * 2.0 + 0.25 * 6.0).epsilon(1e-12));

  CHECK_THROWS_AS(multistep_init({{a}, {b}}, {0.5}), value_error);
  CHECK_THROWS_AS(multistep_init({{a}, {b}}, {0.9, 0.2}), value_error);
  Tensor c = Tensor::from({1.0}, {1});
  CHECK_THROWS_AS(multistep_init({{a}, {c}}, {0.5, 0.5}), shape_error);
}

TEST_CASE("train config validation") {
  TrainConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.thetas = {0.5, 0.3};
  CHECK_THROWS_AS(cfg.validate(), value_error);
  cfg.thetas = {0.25, 0.25, 0.25, 0.25};
  CHECK_THROWS_AS(cfg.validate(), value_error);
  cfg.thetas = {1.0};
  cfg.d = 7;
  CHECK_THROWS_AS(cfg.validate(), value_error);
  cfg.d = 8;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), value_error);
}

TEST_CASE("g2g encoder emits strictly positive variance") {
  Rng rng = make_rng(8);
  G2GEncoder enc(10, 8, 4, rng);
  std::uniform_real_distribution<double> in_d(-3.0, 3.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> row(10);
    for (auto& v : row) v = in_d(rng);
    auto e = enc.embed_one(row);
    REQUIRE(e.mu.size() == 4);
    for (double v : e.var) CHECK(v > 0.0);
  }
}

TEST_CASE("transformer batch forward agrees with per-node forward") {
  TrainConfig cfg = tiny_config();
  cfg.lookback = 2;
  Rng rng = make_rng(9);
  TransformerG2G model(6, cfg, rng);
  DynamicGraph g = tiny_sbm();
  // tiny_sbm has 24 nodes; build a matching model instead
  Rng rng2 = make_rng(9);
  TransformerG2G m(g.n_global(), cfg, rng2);

  std::vector<std::size_t> nodes = {0, 5, 17};
  Tensor history = build_history(g, 4, cfg.lookback, nodes);
  auto batched = m.forward_batch(history, nodes.size());
  REQUIRE(batched.mu.shape() == Shape{3, cfg.embed_dim});
  for (std::size_t b = 0; b < nodes.size(); ++b) {
    Tensor single = build_history(g, 4, cfg.lookback, {nodes[b]});
    auto [e, attn] = m.forward(single.data());
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
      CHECK(batched.mu(b, j) == doctest::Approx(e.mu[j]).epsilon(1e-12));
      CHECK(batched.var(b, j) == doctest::Approx(e.var[j]).epsilon(1e-12));
      CHECK(batched.var(b, j) > 0.0);
    }
    const std::size_t block = (cfg.lookback + 1) * (cfg.lookback + 1);
    for (std::size_t w = 0; w < block; ++w)
      CHECK(batched.attn[b * block + w] == doctest::Approx(attn[w]).epsilon(1e-12));
  }
}

TEST_CASE("attention rows are stochastic; lookback 0 gives identity attention") {
  TrainConfig cfg = tiny_config();
  cfg.lookback = 2;
  DynamicGraph g = tiny_sbm();
  Rng rng = make_rng(10);
  TransformerG2G m(g.n_global(), cfg, rng);
  std::vector<std::size_t> nodes = {1, 2, 3, 4};
  auto out = m.forward_batch(build_history(g, 5, cfg.lookback, nodes), nodes.size());
  const std::size_t seq = cfg.lookback + 1;
  for (std::size_t b = 0; b < nodes.size(); ++b)
    for (std::size_t r = 0; r < seq; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < seq; ++c) s += out.attn[(b * seq + r) * seq + c];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }

  cfg.lookback = 0;
  Rng rng0 = make_rng(10);
  TransformerG2G m0(g.n_global(), cfg, rng0);
  auto out0 = m0.forward_batch(build_history(g, 5, 0, nodes), nodes.size());
  REQUIRE(out0.attn.size() == nodes.size());
  for (double w : out0.attn) CHECK(w == 1.0);
}

TEST_CASE("build_history zero-pads before the first snapshot") {
  DynamicGraph g = tiny_sbm();
  const std::size_t n = g.n_global();
  Tensor h = build_history(g, 0, 2, {3});
  REQUIRE(h.shape() == Shape{3, n});
  for (std::size_t j = 0; j < n; ++j) {
    CHECK(h(0, j) == 0.0);  // t = -2
    CHECK(h(1, j) == 0.0);  // t = -1
  }
  auto row = g.padded_row(0, 3);
  for (std::size_t j = 0; j < n; ++j) CHECK(h(2, j) == row[j]);

  // well inside history: rows are t-1 then t
  Tensor h2 = build_history(g, 4, 1, {7});
  auto r3 = g.padded_row(3, 7), r4 = g.padded_row(4, 7);
  for (std::size_t j = 0; j < n; ++j) {
    CHECK(h2(0, j) == r3[j]);
    CHECK(h2(1, j) == r4[j]);
  }
}

TEST_CASE("transformer parameter gradients pass finite differences") {
  TrainConfig cfg = tiny_config();
  DynamicGraph g = tiny_sbm();
  Rng rng = make_rng(12);
  TransformerG2G m(g.n_global(), cfg, rng);
  Rng srng = make_rng(12, 0x7472);
  TripletBatch batch = sample_triplets(g.snapshot(3), {.k_per_anchor = 1, .max_anchors = 6}, srng);
  REQUIRE(!batch.triples.empty());
  std::vector<std::size_t> lookup(g.n_global(), SIZE_MAX);
  std::vector<std::size_t> nodes;
  for (const auto& tr : batch.triples)
    for (std::size_t v : {tr.anchor, tr.near, tr.far})
      if (lookup[v] == SIZE_MAX) {
        lookup[v] = nodes.size();
        nodes.push_back(v);
      }
  Tensor history = build_history(g, 3, cfg.lookback, nodes);
  auto loss_fn = [&]() {
    auto out = m.forward_batch(history, nodes.size());
    return triplet_loss(out.mu, out.var, batch, [&](std::size_t i) { return lookup[i]; });
  };
  auto params = m.params();
  const auto& names = TransformerG2G::param_names();
  // spot-check a spread of parameters across the network
  for (const char* pick : {"w_in", "w_q", "ln1_g", "w_ff1", "w_map", "b_sig"}) {
    auto it = std::find(names.begin(), names.end(), pick);
    REQUIRE(it != names.end());
    Tensor p = params[it - names.begin()];
    INFO("param: " << pick);
    CHECK(grad_check_param(loss_fn, p, 1e-5) < 1e-4);
  }
}

TEST_CASE("dyng2g training reduces the loss and fills every timestamp") {
  DynamicGraph g = tiny_sbm();
  TrainConfig cfg = tiny_config();
  cfg.epochs = 40;
  cfg.lr = 5e-3;
  auto ranges = split(g, SplitSpec{5, 1, 2});
  auto res = train_dyng2g(g, cfg, ranges);
  REQUIRE(res.train_loss.size() == 5);
  for (double l : res.train_loss) CHECK(std::isfinite(l));
  for (std::size_t t = 0; t < g.n_timestamps(); ++t) {
    CHECK(res.embeddings.mu[t].size() == g.n_global() * cfg.embed_dim);
    for (double v : res.embeddings.var[t]) CHECK(v > 0.0);
  }
  CHECK(res.final_encoder.has_value());
}

TEST_CASE("transformer training reduces the loss") {
  DynamicGraph g = tiny_sbm();
  TrainConfig cfg = tiny_config();
  cfg.epochs = 25;
  cfg.lr = 5e-3;
  auto ranges = split(g, SplitSpec{5, 1, 2});
  auto res = train_transformer(g, cfg, ranges);
  REQUIRE(res.train_loss.size() == cfg.epochs);
  CHECK(res.train_loss.back() < res.train_loss.front());
  CHECK(res.val_loss.size() == cfg.epochs);
  REQUIRE(res.model.has_value());
  for (std::size_t t = 0; t < g.n_timestamps(); ++t)
    for (double v : res.embeddings.var[t]) CHECK(v > 0.0);
}

TEST_CASE("training is bit-deterministic under a fixed seed") {
  DynamicGraph g = tiny_sbm();
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  auto ranges = split(g, SplitSpec{5, 1, 2});
  auto a = train_transformer(g, cfg, ranges);
  auto b = train_transformer(g, cfg, ranges);
  CHECK(a.train_loss == b.train_loss);
  for (std::size_t t = 0; t < g.n_timestamps(); ++t) {
    CHECK(a.embeddings.mu[t] == b.embeddings.mu[t]);
    CHECK(a.embeddings.var[t] == b.embeddings.var[t]);
  }
  cfg.seed = 2;
  auto c = train_transformer(g, cfg, ranges);
  CHECK(a.embeddings.mu[0] != c.embeddings.mu[0]);
}
