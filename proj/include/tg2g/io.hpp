#pragma once

// Artifact persistence: bit-exact binary checkpoints, embedding tables
// (binary or CSV), diagnostic/result CSVs, and JSON run manifests.

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tg2g/analysis.hpp"
#include "tg2g/eval.hpp"
#include "tg2g/models.hpp"
#include "tg2g/util.hpp"

namespace tg2g {

struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr const char* kCodeVersion = "tg2g 0.1.0";

namespace detail_io {

inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) throw io_error("checkpoint truncated");
  return v;
}
inline void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline double read_f64(std::istream& in) {
  double v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) throw io_error("checkpoint truncated");
  return v;
}
inline void write_str(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_str(std::istream& in) {
  std::string s(read_u64(in), '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(s.size())))
    throw io_error("checkpoint truncated");
  return s;
}
inline void write_vec(std::ostream& out, const std::vector<double>& v) {
  write_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}
inline std::vector<double> read_vec(std::istream& in) {
  std::vector<double> v(read_u64(in));
  if (!in.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double))))
    throw io_error("checkpoint truncated");
  return v;
}

inline void write_config(std::ostream& out, const TrainConfig& cfg) {
  write_u64(out, cfg.lookback);
  write_u64(out, cfg.d);
  write_u64(out, cfg.d_ff);
  write_u64(out, cfg.hidden);
  write_u64(out, cfg.embed_dim);
  write_f64(out, cfg.lr);
  write_u64(out, cfg.epochs);
  write_u64(out, cfg.seed);
  write_u64(out, cfg.thetas.size());
  for (double t : cfg.thetas) write_f64(out, t);
  write_u64(out, cfg.triplets.k_per_anchor);
  write_u64(out, cfg.triplets.max_per_snapshot_factor);
  write_u64(out, cfg.triplets.max_anchors);
}

inline TrainConfig read_config(std::istream& in) {
  TrainConfig cfg;
  cfg.lookback = read_u64(in);
  cfg.d = read_u64(in);
  cfg.d_ff = read_u64(in);
  cfg.hidden = read_u64(in);
  cfg.embed_dim = read_u64(in);
  cfg.lr = read_f64(in);
  cfg.epochs = read_u64(in);
  cfg.seed = read_u64(in);
  cfg.thetas.resize(read_u64(in));
  for (auto& t : cfg.thetas) t = read_f64(in);
  cfg.triplets.k_per_anchor = read_u64(in);
  cfg.triplets.max_per_snapshot_factor = read_u64(in);
  cfg.triplets.max_anchors = read_u64(in);
  return cfg;
}

inline void write_params(std::ostream& out, const std::vector<Tensor>& params,
                         const std::vector<std::string>& names) {
  write_u64(out, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    write_str(out, names[i]);
    write_u64(out, params[i].shape().size());
    for (auto d : params[i].shape()) write_u64(out, d);
    write_vec(out, params[i].data());
  }
}

inline void read_params(std::istream& in, std::vector<Tensor> params,
                        const std::vector<std::string>& names) {
  const std::size_t count = read_u64(in);
  if (count != params.size()) throw io_error("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = read_str(in);
    if (name != names[i]) throw io_error("checkpoint: unexpected parameter " + name);
    Shape shape(read_u64(in));
    for (auto& d : shape) d = read_u64(in);
    if (shape != params[i].shape()) throw io_error("checkpoint: shape mismatch for " + name);
    params[i].data() = read_vec(in);
  }
}

}  // namespace detail_io

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

constexpr std::uint64_t kCheckpointMagic = 0x54473247434b5031ULL;  // "TG2GCKP1"

struct Checkpoint {
  std::string model_type;  // "transformer" or "g2g"
  std::size_t n_in = 0;
  TrainConfig config;
  std::optional<TransformerG2G> transformer;
  std::optional<G2GEncoder> g2g;
};

inline void save_checkpoint(const std::string& path, const TransformerG2G& model,
                            const TrainConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write checkpoint: " + path);
  detail_io::write_u64(out, kCheckpointMagic);
  detail_io::write_str(out, "transformer");
  detail_io::write_u64(out, model.n_in());
  detail_io::write_config(out, cfg);
  detail_io::write_params(out, model.params(), TransformerG2G::param_names());
}

inline void save_checkpoint(const std::string& path, const G2GEncoder& enc,
                            const TrainConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write checkpoint: " + path);
  detail_io::write_u64(out, kCheckpointMagic);
  detail_io::write_str(out, "g2g");
  detail_io::write_u64(out, enc.n_in());
  detail_io::write_config(out, cfg);
  detail_io::write_params(out, enc.params(), G2GEncoder::param_names());
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open checkpoint: " + path);
  if (detail_io::read_u64(in) != kCheckpointMagic)
    throw io_error("not a checkpoint file: " + path);
  Checkpoint ck;
  ck.model_type = detail_io::read_str(in);
  ck.n_in = detail_io::read_u64(in);
  ck.config = detail_io::read_config(in);
  Rng rng = make_rng(0);  // placeholder init, immediately overwritten
  if (ck.model_type == "transformer") {
    TransformerG2G model(ck.n_in, ck.config, rng);
    detail_io::read_params(in, model.params(), TransformerG2G::param_names());
    ck.transformer = std::move(model);
  } else if (ck.model_type == "g2g") {
    G2GEncoder enc(ck.n_in, ck.config.hidden, ck.config.embed_dim, rng);
    detail_io::read_params(in, enc.params(), G2GEncoder::param_names());
    ck.g2g = std::move(enc);
  } else {
    throw io_error("checkpoint: unknown model type " + ck.model_type);
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Embedding tables
// ---------------------------------------------------------------------------

constexpr std::uint64_t kEmbeddingMagic = 0x54473247454d4231ULL;  // "TG2GEMB1"

inline void save_embeddings(const std::string& path, const EmbeddingTable& emb) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write embeddings: " + path);
    out << "t,node";
    for (std::size_t k = 0; k < emb.embed_dim; ++k) out << ",mu_" << k;
    for (std::size_t k = 0; k < emb.embed_dim; ++k) out << ",var_" << k;
    out << '\n';
    for (std::size_t t = 0; t < emb.mu.size(); ++t)
      for (std::size_t i = 0; i < emb.n_nodes; ++i) {
        out << t << ',' << i;
        for (std::size_t k = 0; k < emb.embed_dim; ++k)
          out << ',' << format_full(emb.mu[t][i * emb.embed_dim + k]);
        for (std::size_t k = 0; k < emb.embed_dim; ++k)
          out << ',' << format_full(emb.var[t][i * emb.embed_dim + k]);
        out << '\n';
      }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write embeddings: " + path);
  detail_io::write_u64(out, kEmbeddingMagic);
  detail_io::write_u64(out, emb.mu.size());
  detail_io::write_u64(out, emb.n_nodes);
  detail_io::write_u64(out, emb.embed_dim);
  for (std::size_t t = 0; t < emb.mu.size(); ++t) {
    detail_io::write_vec(out, emb.mu[t]);
    detail_io::write_vec(out, emb.var[t]);
  }
}

inline EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw io_error("cannot open embeddings: " + path);
  std::uint64_t magic = 0;
  probe.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  EmbeddingTable emb;
  if (magic == kEmbeddingMagic) {
    const std::size_t n_t = detail_io::read_u64(probe);
    emb.n_nodes = detail_io::read_u64(probe);
    emb.embed_dim = detail_io::read_u64(probe);
    emb.mu.resize(n_t);
    emb.var.resize(n_t);
    for (std::size_t t = 0; t < n_t; ++t) {
      emb.mu[t] = detail_io::read_vec(probe);
      emb.var[t] = detail_io::read_vec(probe);
    }
    return emb;
  }
  // CSV fallback
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  std::size_t cols = std::count(header.begin(), header.end(), ',') + 1;
  if (cols < 4 || (cols - 2) % 2 != 0) throw io_error("embeddings csv: bad header in " + path);
  emb.embed_dim = (cols - 2) / 2;
  std::string line;
  std::size_t max_node = 0;
  std::vector<std::tuple<std::size_t, std::size_t, std::vector<double>>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    for (auto& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    std::size_t t, node;
    ls >> t >> node;
    std::vector<double> vals(2 * emb.embed_dim);
    for (auto& v : vals)
      if (!(ls >> v)) throw io_error("embeddings csv: short row in " + path);
    max_node = std::max(max_node, node);
    rows.push_back({t, node, std::move(vals)});
  }
  std::size_t n_t = 0;
  for (const auto& [t, node, vals] : rows) n_t = std::max(n_t, t + 1);
  emb.n_nodes = max_node + 1;
  emb.mu.assign(n_t, std::vector<double>(emb.n_nodes * emb.embed_dim, 0.0));
  emb.var.assign(n_t, std::vector<double>(emb.n_nodes * emb.embed_dim, 1.0));
  for (const auto& [t, node, vals] : rows)
    for (std::size_t k = 0; k < emb.embed_dim; ++k) {
      emb.mu[t][node * emb.embed_dim + k] = vals[k];
      emb.var[t][node * emb.embed_dim + k] = vals[emb.embed_dim + k];
    }
  return emb;
}

// ---------------------------------------------------------------------------
// CSV emitters
// ---------------------------------------------------------------------------

inline void save_tea_csv(const std::string& path, const TeaProfile& p) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write: " + path);
  out << "t,new_edges,repeated_edges\n";
  for (std::size_t i = 0; i < p.timestamps.size(); ++i)
    out << p.timestamps[i] << ',' << p.new_edges[i] << ',' << p.repeated_edges[i] << '\n';
}

inline void save_cosine_csv(const std::string& path, const CosineProfile& p) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write: " + path);
  out << "anchor,lag,cosine\n";
  for (std::size_t a = 0; a < p.anchors.size(); ++a)
    for (std::size_t k = 0; k < p.sim[a].size(); ++k)
      out << p.anchors[a] << ',' << (k + 1) << ',' << format_full(p.sim[a][k]) << '\n';
  for (std::size_t k = 0; k < p.average.size(); ++k)
    out << "average," << (k + 1) << ',' << format_full(p.average[k]) << '\n';
}

inline void save_ranking_csv(const std::string& path, const RankingResult& r) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write: " + path);
  out << "timestamp,node,ap,rr\n";
  for (const auto& rec : r.records)
    out << rec.t << ',' << rec.node << ',' << format_full(rec.ap) << ',' << format_full(rec.rr)
        << '\n';
  out << "# MAP,MRR,map_std,mrr_std\n";
  out << "# " << format_full(r.map) << ',' << format_full(r.mrr) << ','
      << format_full(r.map_std_t) << ',' << format_full(r.mrr_std_t) << '\n';
}

inline void save_attention_csv(const std::string& weights_path, const std::string& degrees_path,
                               const AttentionReport& r) {
  std::ofstream wout(weights_path);
  if (!wout) throw io_error("cannot write: " + weights_path);
  wout << "t,row,col,weight\n";
  for (const auto& snap : r.per_timestamp) {
    const std::size_t seq = snap.degrees.size();
    for (std::size_t i = 0; i < seq; ++i)
      for (std::size_t j = 0; j < seq; ++j)
        wout << snap.t << ',' << i << ',' << j << ',' << format_full(snap.weights[i * seq + j])
             << '\n';
  }
  std::ofstream dout(degrees_path);
  if (!dout) throw io_error("cannot write: " + degrees_path);
  dout << "t,lag,degree\n";
  for (const auto& snap : r.per_timestamp)
    for (std::size_t s = 0; s < snap.degrees.size(); ++s)
      dout << snap.t << ',' << (snap.degrees.size() - 1 - s) << ',' << snap.degrees[s] << '\n';
}

inline void save_loss_csv(const std::string& path, const std::vector<double>& train,
                          const std::vector<double>& val) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write: " + path);
  out << "step,train_loss,val_loss\n";
  for (std::size_t i = 0; i < train.size(); ++i) {
    out << i << ',' << format_full(train[i]) << ',';
    if (i < val.size()) out << format_full(val[i]);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

class Manifest {
 public:
  explicit Manifest(std::string command) { j_["command"] = std::move(command); }

  void set_config(const nlohmann::json& cfg) { j_["config"] = cfg; }
  void set_dataset(const std::string& path) {
    j_["dataset"] = path;
    j_["dataset_hash"] = fnv1a_file(path);
  }
  void set_seed(std::uint64_t seed) { j_["seed"] = seed; }
  void add_output(const std::string& path) { j_["outputs"].push_back(path); }
  void set(const std::string& key, const nlohmann::json& v) { j_[key] = v; }
  void set_timing_seconds(double s) { j_["wall_clock_seconds"] = s; }

  void save(const std::string& path) const {
    nlohmann::json j = j_;
    j["code_version"] = kCodeVersion;
    std::ofstream out(path);
    if (!out) throw io_error("cannot write manifest: " + path);
    out << j.dump(2) << '\n';
  }

 private:
  nlohmann::json j_;
};

}  // namespace tg2g
