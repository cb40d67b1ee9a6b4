// tg2g command-line tool: dataset diagnostics, synthetic SBM generation,
// embedding training, inference, and link-prediction evaluation.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tg2g/analysis.hpp"
#include "tg2g/eval.hpp"
#include "tg2g/graph.hpp"
#include "tg2g/io.hpp"
#include "tg2g/models.hpp"
#include "tg2g/sampling.hpp"

namespace {

using namespace tg2g;
namespace fs = std::filesystem;

// exit-code taxonomy: 0 ok, 2 input, 3 numeric, 4 config, 5 compatibility
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitConfig = 4;
constexpr int kExitCompat = 5;

struct config_usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct compat_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-dataset defaults (timestamp bins, chronological split, model widths).
struct Preset {
  std::size_t bins, n_train, n_val, n_test, embed_dim, d;
  double lr;
  bool directed;
};

const std::map<std::string, Preset>& presets() {
  static const std::map<std::string, Preset> p = {
      {"sbm", {50, 35, 5, 10, 64, 256, 1e-4, false}},
      {"reality-mining", {90, 63, 9, 18, 64, 256, 1e-4, false}},
      {"uci", {88, 62, 9, 17, 256, 512, 1e-6, true}},
      {"slashdot", {12, 8, 2, 2, 64, 256, 1e-6, true}},
      {"bitcoin", {137, 95, 14, 28, 256, 512, 1e-6, true}},
      {"as", {100, 70, 10, 20, 64, 256, 1e-4, false}},
  };
  return p;
}

// Dataset paths resolve against TG2G_DATA_DIR when not found directly.
std::string resolve_dataset(const std::string& path) {
  if (fs::exists(path)) return path;
  if (const char* dir = std::getenv("TG2G_DATA_DIR")) {
    const fs::path candidate = fs::path(dir) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;  // let the loader report the miss
}

struct DatasetOptions {
  std::string path;
  std::string preset;
  bool directed = false;
  bool weighted = false;
  std::size_t bins = 0;
  bool dense_ids = false;
  double train_frac = 0.7;
  double val_frac = 0.1;
};

void add_dataset_options(CLI::App* sub, DatasetOptions& opt) {
  sub->add_option("dataset", opt.path, "Edge-list file: src dst timestamp [weight]")->required();
  sub->add_option("--preset", opt.preset, "Named dataset defaults")
      ->check(CLI::IsMember({"sbm", "reality-mining", "uci", "slashdot", "bitcoin", "as"}));
  sub->add_flag("--directed", opt.directed, "Treat edges as directed");
  sub->add_flag("--weighted", opt.weighted, "Keep edge weights (default: binarize)");
  sub->add_option("--bins", opt.bins, "Uniform timestamp bins (0: one per raw timestamp)");
  sub->add_flag("--dense-ids", opt.dense_ids, "Node tokens are already dense indices");
  sub->add_option("--train-frac", opt.train_frac, "Fraction of timestamps for training");
  sub->add_option("--val-frac", opt.val_frac, "Fraction of timestamps for validation");
}

// preset value < config file < CLI flag; CLI11 counts cover the latter two
void apply_dataset_preset(const CLI::App* sub, DatasetOptions& opt) {
  if (opt.preset.empty()) return;
  const Preset& p = presets().at(opt.preset);
  if (sub->count("--bins") == 0) opt.bins = p.bins;
  if (sub->count("--directed") == 0) opt.directed = p.directed;
}

DynamicGraph load_dataset(const DatasetOptions& opt) {
  EdgeListOptions elo;
  elo.directed = opt.directed;
  elo.binarize = !opt.weighted;
  elo.n_bins = opt.bins;
  elo.ids_are_dense = opt.dense_ids;
  return load_edge_list(resolve_dataset(opt.path), elo);
}

SplitRanges make_split(const CLI::App* sub, const DatasetOptions& opt, const DynamicGraph& g) {
  if (!opt.preset.empty() && sub->count("--train-frac") == 0 && sub->count("--val-frac") == 0) {
    const Preset& p = presets().at(opt.preset);
    if (p.n_train + p.n_val + p.n_test == g.n_timestamps())
      return split(g, SplitSpec{p.n_train, p.n_val, p.n_test});
  }
  return split(g, SplitSpec::fractions(g.n_timestamps(), opt.train_frac, opt.val_frac));
}

nlohmann::json dataset_json(const DatasetOptions& opt) {
  return {{"preset", opt.preset}, {"directed", opt.directed}, {"weighted", opt.weighted},
          {"bins", opt.bins},     {"dense_ids", opt.dense_ids}};
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  DatasetOptions data;
  std::string out_dir = ".";
  std::size_t window = 10;
  std::vector<std::size_t> anchors;
};

int cmd_analyze(const CLI::App* sub, AnalyzeArgs& a) {
  Timer timer;
  apply_dataset_preset(sub, a.data);
  DynamicGraph g = load_dataset(a.data);
  fs::create_directories(a.out_dir);

  TeaProfile tp = tea(g);
  const std::string tea_path = (fs::path(a.out_dir) / "tea.csv").string();
  save_tea_csv(tea_path, tp);

  // default anchors: every `window` timestamps, as far back as the window allows
  std::vector<std::size_t> anchors = a.anchors;
  if (anchors.empty())
    for (std::size_t t = a.window; t < g.n_timestamps(); t += a.window) anchors.push_back(t);
  std::string cos_path;
  if (!anchors.empty()) {
    CosineProfile cp = cosine_profile(g, anchors, a.window);
    cos_path = (fs::path(a.out_dir) / "cosine.csv").string();
    save_cosine_csv(cos_path, cp);
  }

  std::cout << "nodes=" << g.n_global() << " timestamps=" << g.n_timestamps()
            << " edges=" << g.total_edges() << '\n';
  std::cout << "novelty=" << format_full(tp.novelty) << '\n';

  Manifest m("analyze");
  m.set_dataset(resolve_dataset(a.data.path));
  m.set_config(dataset_json(a.data));
  m.set("novelty", tp.novelty);
  m.add_output(tea_path);
  if (!cos_path.empty()) m.add_output(cos_path);
  m.set_timing_seconds(timer.seconds());
  m.save((fs::path(a.out_dir) / "manifest.json").string());
  return 0;
}

// ---------------------------------------------------------------------------
// gen-sbm
// ---------------------------------------------------------------------------

struct GenSbmArgs {
  std::string out;
  SbmParams params;
};

int cmd_gen_sbm(GenSbmArgs& a) {
  Timer timer;
  DynamicGraph g = [&] {
    try {
      return generate_sbm(a.params);
    } catch (const graph_error& e) {
      throw config_usage_error(e.what());  // parameter validation, not IO
    }
  }();
  save_edge_list(g, a.out);
  std::cout << "wrote " << a.out << ": nodes=" << g.n_global()
            << " timestamps=" << g.n_timestamps() << " edges=" << g.total_edges() << '\n';

  Manifest m("gen-sbm");
  m.set_config({{"nodes", a.params.n_nodes},
                {"communities", a.params.n_communities},
                {"p_in", a.params.p_in},
                {"p_out", a.params.p_out},
                {"timestamps", a.params.n_timestamps},
                {"migrate_min", a.params.migrate_min},
                {"migrate_max", a.params.migrate_max}});
  m.set_seed(a.params.seed);
  m.set_dataset(a.out);
  m.add_output(a.out);
  m.set_timing_seconds(timer.seconds());
  m.save(a.out + ".manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  DatasetOptions data;
  std::string model = "transformer";
  std::string out_dir = ".";
  TrainConfig cfg;
  double theta = 1.0;              // two-step coefficient (newest weight)
  std::vector<double> theta3;      // three-step coefficients
  bool quiet = false;
};

nlohmann::json train_config_json(const TrainConfig& cfg, const std::string& model) {
  return {{"model", model},
          {"lookback", cfg.lookback},
          {"d", cfg.d},
          {"d_ff", cfg.d_ff},
          {"hidden", cfg.hidden},
          {"embed_dim", cfg.embed_dim},
          {"lr", cfg.lr},
          {"epochs", cfg.epochs},
          {"thetas", cfg.thetas},
          {"k_per_anchor", cfg.triplets.k_per_anchor},
          {"max_anchors", cfg.triplets.max_anchors}};
}

int cmd_train(const CLI::App* sub, TrainArgs& a) {
  Timer timer;
  apply_dataset_preset(sub, a.data);
  if (!a.data.preset.empty()) {
    const Preset& p = presets().at(a.data.preset);
    if (sub->count("--embed-dim") == 0) a.cfg.embed_dim = p.embed_dim;
    if (sub->count("--d") == 0) a.cfg.d = p.d;
    if (sub->count("--lr") == 0) a.cfg.lr = p.lr;
  }
  if (sub->count("--theta3") > 0) {
    a.cfg.thetas = a.theta3;
  } else if (sub->count("--theta") > 0) {
    a.cfg.thetas = {a.theta, 1.0 - a.theta};
  }
  try {
    a.cfg.validate();
  } catch (const value_error& e) {
    throw config_usage_error(e.what());
  }

  DynamicGraph g = load_dataset(a.data);
  SplitRanges ranges = make_split(sub, a.data, g);
  fs::create_directories(a.out_dir);
  auto log = a.quiet ? std::function<void(const std::string&)>{}
                     : [](const std::string& s) { std::cout << s << '\n'; };

  const std::string ckpt_path = (fs::path(a.out_dir) / "model.ckpt").string();
  const std::string emb_path = (fs::path(a.out_dir) / "embeddings.bin").string();
  const std::string loss_path = (fs::path(a.out_dir) / "loss.csv").string();

  if (a.model == "transformer") {
    auto res = train_transformer(g, a.cfg, ranges, log);
    save_checkpoint(ckpt_path, *res.model, a.cfg);
    save_embeddings(emb_path, res.embeddings);
    save_loss_csv(loss_path, res.train_loss, res.val_loss);
    std::cout << "final train_loss=" << format_full(res.train_loss.back()) << '\n';
  } else {  // dyng2g (warm start) or g2g (independent per-timestamp models)
    auto res = train_dyng2g(g, a.cfg, ranges, a.model == "dyng2g", log);
    save_checkpoint(ckpt_path, *res.final_encoder, a.cfg);
    save_embeddings(emb_path, res.embeddings);
    save_loss_csv(loss_path, res.train_loss, res.val_loss);
  }

  Manifest m("train");
  m.set_dataset(resolve_dataset(a.data.path));
  m.set_config(train_config_json(a.cfg, a.model));
  m.set("dataset_options", dataset_json(a.data));
  m.set_seed(a.cfg.seed);
  m.add_output(ckpt_path);
  m.add_output(emb_path);
  m.add_output(loss_path);
  m.set_timing_seconds(timer.seconds());
  m.save((fs::path(a.out_dir) / "manifest.json").string());
  return 0;
}

// ---------------------------------------------------------------------------
// embed
// ---------------------------------------------------------------------------

struct EmbedArgs {
  DatasetOptions data;
  std::string checkpoint;
  std::string out = "embeddings.bin";
  long long attention_node = -1;
  std::vector<std::size_t> attention_timestamps;
  std::string attention_out;
};

int cmd_embed(const CLI::App* sub, EmbedArgs& a) {
  Timer timer;
  apply_dataset_preset(sub, a.data);
  DynamicGraph g = load_dataset(a.data);
  Checkpoint ck = load_checkpoint(a.checkpoint);
  if (ck.n_in != g.n_global())
    throw compat_error("checkpoint expects " + std::to_string(ck.n_in) + " nodes but dataset has " +
                       std::to_string(g.n_global()));

  EmbeddingTable emb;
  if (ck.transformer) {
    emb = embed_all(*ck.transformer, g);
  } else {
    emb.n_nodes = g.n_global();
    emb.embed_dim = ck.g2g->embed_dim();
    emb.mu.resize(g.n_timestamps());
    emb.var.resize(g.n_timestamps());
    std::vector<std::size_t> all_nodes(g.n_global());
    for (std::size_t i = 0; i < all_nodes.size(); ++i) all_nodes[i] = i;
    for (std::size_t t = 0; t < g.n_timestamps(); ++t) {
      auto [mu, var] = ck.g2g->forward(build_history(g, t, 0, all_nodes));
      emb.mu[t] = mu.data();
      emb.var[t] = var.data();
    }
  }
  save_embeddings(a.out, emb);
  std::cout << "wrote " << a.out << ": timestamps=" << emb.mu.size() << " nodes=" << emb.n_nodes
            << " embed_dim=" << emb.embed_dim << '\n';

  Manifest m("embed");
  m.set_dataset(resolve_dataset(a.data.path));
  m.set_config({{"checkpoint", a.checkpoint}, {"model_type", ck.model_type}});
  m.set_seed(ck.config.seed);
  m.add_output(a.out);

  if (a.attention_node >= 0) {
    if (!ck.transformer) throw compat_error("attention report requires a transformer checkpoint");
    std::vector<std::size_t> ts = a.attention_timestamps;
    if (ts.empty())
      for (std::size_t t = 0; t < g.n_timestamps(); ++t) ts.push_back(t);
    auto report = attention_report(*ck.transformer, g, static_cast<std::size_t>(a.attention_node), ts);
    const std::string base = a.attention_out.empty() ? "attention" : a.attention_out;
    save_attention_csv(base + "_weights.csv", base + "_degrees.csv", report);
    if (report.degree_rank_correlation)
      std::cout << "attention_degree_spearman=" << format_full(*report.degree_rank_correlation)
                << '\n';
    m.add_output(base + "_weights.csv");
    m.add_output(base + "_degrees.csv");
  }
  m.set_timing_seconds(timer.seconds());
  m.save(a.out + ".manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  DatasetOptions data;
  std::string embeddings;
  std::string out_dir = ".";
  ClassifierConfig clf;
  EvalConfig ecfg;
  std::size_t repeats = 1;
  std::uint64_t seed = 1;
};

int cmd_eval(const CLI::App* sub, EvalArgs& a) {
  Timer timer;
  apply_dataset_preset(sub, a.data);
  DynamicGraph g = load_dataset(a.data);
  EmbeddingTable emb = load_embeddings(a.embeddings);
  if (emb.n_nodes != g.n_global())
    throw compat_error("embeddings cover " + std::to_string(emb.n_nodes) +
                       " nodes but dataset has " + std::to_string(g.n_global()));
  if (emb.mu.size() != g.n_timestamps())
    throw compat_error("embeddings cover " + std::to_string(emb.mu.size()) +
                       " timestamps but dataset has " + std::to_string(g.n_timestamps()));
  SplitRanges ranges = make_split(sub, a.data, g);
  fs::create_directories(a.out_dir);

  std::vector<double> maps, mrrs;
  std::string rank_path;
  for (std::size_t rep = 0; rep < a.repeats; ++rep) {
    ClassifierConfig ccfg = a.clf;
    ccfg.seed = a.seed + rep;
    EvalConfig ecfg = a.ecfg;
    ecfg.seed = a.seed + rep;
    LinkClassifier clf = train_classifier(emb, g, ranges.train_begin, ranges.train_end, ccfg);
    RankingResult res = evaluate(emb, clf, g, ranges.test_begin, ranges.test_end, ecfg);
    maps.push_back(res.map);
    mrrs.push_back(res.mrr);
    if (rep == 0) {
      rank_path = (fs::path(a.out_dir) / "ranking.csv").string();
      save_ranking_csv(rank_path, res);
    }
  }

  auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    return std::pair<double, double>{
        m, v.size() > 1 ? std::sqrt(s2 / static_cast<double>(v.size() - 1)) : 0.0};
  };
  auto [map, map_sd] = mean_std(maps);
  auto [mrr, mrr_sd] = mean_std(mrrs);
  if (a.repeats > 1)
    std::cout << "MAP=" << format_full(map) << "±" << format_full(map_sd)
              << " MRR=" << format_full(mrr) << "±" << format_full(mrr_sd) << " (" << a.repeats
              << " seeds)\n";
  else
    std::cout << "MAP=" << format_full(map) << " MRR=" << format_full(mrr) << '\n';

  Manifest m("eval");
  m.set_dataset(resolve_dataset(a.data.path));
  m.set_config({{"embeddings", a.embeddings},
                {"clf_lr", a.clf.lr},
                {"clf_epochs", a.clf.epochs},
                {"neg_factor", a.ecfg.neg_factor},
                {"exhaustive_limit", a.ecfg.exhaustive_limit},
                {"repeats", a.repeats}});
  m.set_seed(a.seed);
  m.set("map", map);
  m.set("mrr", mrr);
  m.set("map_std", map_sd);
  m.set("mrr_std", mrr_sd);
  m.add_output(rank_path);
  m.set_timing_seconds(timer.seconds());
  m.save((fs::path(a.out_dir) / "manifest.json").string());
  return 0;
}

}  // namespace

namespace {

// Flat key=value config files sit between built-in defaults and CLI flags:
// after a first parse, every file key whose option was not given on the
// command line is appended as `--key=value` and the command line reparsed.
std::vector<std::string> config_file_args(const CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_usage_error("cannot open config file: " + path);
  std::vector<std::string> extra;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_usage_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = "--" + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const CLI::Option* opt = sub->get_option_no_throw(key);
    if (opt == nullptr)
      throw config_usage_error(path + ":" + std::to_string(lineno) + ": unknown option " + key);
    if (opt->count() > 0) continue;  // explicit CLI flag wins
    extra.push_back(key + "=" + value);
  }
  return extra;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic temporal graph embedding toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tg2g::kCodeVersion));
  std::string config_file;

  AnalyzeArgs analyze_args;
  CLI::App* analyze = app.add_subcommand("analyze", "Temporal edge appearance and cosine profiles");
  add_dataset_options(analyze, analyze_args.data);
  analyze->add_option("--out-dir", analyze_args.out_dir, "Output directory");
  analyze->add_option("--window", analyze_args.window, "Cosine look-back window");
  analyze->add_option("--anchors", analyze_args.anchors, "Cosine anchor timestamps");
  analyze->add_option("--config", config_file, "Flat key=value config file");

  GenSbmArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-sbm", "Generate a stochastic block model dataset");
  gen->add_option("out", gen_args.out, "Output edge-list path")->required();
  gen->add_option("--nodes", gen_args.params.n_nodes, "Node count");
  gen->add_option("--communities", gen_args.params.n_communities, "Community count");
  gen->add_option("--p-in", gen_args.params.p_in, "Within-community edge probability");
  gen->add_option("--p-out", gen_args.params.p_out, "Cross-community edge probability");
  gen->add_option("--timestamps", gen_args.params.n_timestamps, "Snapshot count");
  gen->add_option("--migrate-min", gen_args.params.migrate_min, "Min migrating nodes per step");
  gen->add_option("--migrate-max", gen_args.params.migrate_max, "Max migrating nodes per step");
  gen->add_option("--seed", gen_args.params.seed, "Random seed");
  gen->add_option("--config", config_file, "Flat key=value config file");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train an embedding model");
  add_dataset_options(train, train_args.data);
  train->add_option("--model", train_args.model, "Model variant")
      ->check(CLI::IsMember({"transformer", "dyng2g", "g2g"}));
  train->add_option("--out-dir", train_args.out_dir, "Output directory");
  train->add_option("--lookback", train_args.cfg.lookback, "History length l (sequence l+1)");
  train->add_option("--d", train_args.cfg.d, "Transformer width");
  train->add_option("--d-ff", train_args.cfg.d_ff, "Feed-forward inner width");
  train->add_option("--hidden", train_args.cfg.hidden, "Post-encoder hidden width");
  train->add_option("--embed-dim", train_args.cfg.embed_dim, "Embedding size L0");
  train->add_option("--lr", train_args.cfg.lr, "Learning rate");
  train->add_option("--epochs", train_args.cfg.epochs, "Training epochs");
  train->add_option("--seed", train_args.cfg.seed, "Random seed");
  train->add_option("--theta", train_args.theta,
                    "Two-step warm start: theta * W(t-1) + (1-theta) * W(t-2)");
  train->add_option("--theta3", train_args.theta3, "Three-step warm-start coefficients")
      ->expected(3);
  train->add_option("--k-per-anchor", train_args.cfg.triplets.k_per_anchor,
                    "Triplets per anchor node");
  train->add_option("--max-anchors", train_args.cfg.triplets.max_anchors,
                    "Anchor subsample per snapshot (0: all)");
  train->add_flag("--quiet", train_args.quiet, "Suppress progress lines");
  train->add_option("--config", config_file, "Flat key=value config file");

  EmbedArgs embed_args;
  CLI::App* embed = app.add_subcommand("embed", "Emit embeddings from a checkpoint");
  add_dataset_options(embed, embed_args.data);
  embed->add_option("--checkpoint", embed_args.checkpoint, "Model checkpoint")->required();
  embed->add_option("--out", embed_args.out, "Output table (.csv for text)");
  embed->add_option("--attention-node", embed_args.attention_node,
                    "Emit an attention/degree report for this node");
  embed->add_option("--attention-timestamps", embed_args.attention_timestamps,
                    "Timestamps for the attention report (default: all)");
  embed->add_option("--attention-out", embed_args.attention_out, "Attention CSV base name");
  embed->add_option("--config", config_file, "Flat key=value config file");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Link-prediction evaluation of embeddings");
  add_dataset_options(eval, eval_args.data);
  eval->add_option("--embeddings", eval_args.embeddings, "Embedding table")->required();
  eval->add_option("--out-dir", eval_args.out_dir, "Output directory");
  eval->add_option("--clf-lr", eval_args.clf.lr, "Classifier learning rate");
  eval->add_option("--clf-epochs", eval_args.clf.epochs, "Classifier epochs");
  eval->add_option("--batch-size", eval_args.clf.batch_size, "Classifier minibatch size");
  eval->add_option("--max-pos", eval_args.clf.max_pos_per_timestamp,
                   "Positive-pair cap per timestamp");
  eval->add_option("--neg-per-pos", eval_args.clf.neg_per_pos, "Training negatives per positive");
  eval->add_option("--neg-factor", eval_args.ecfg.neg_factor, "Ranking negatives per positive");
  eval->add_option("--exhaustive-limit", eval_args.ecfg.exhaustive_limit,
                   "Rank against all nodes when n <= limit");
  eval->add_option("--repeats", eval_args.repeats, "Classifier seeds for mean±std reporting");
  eval->add_option("--seed", eval_args.seed, "Base random seed");
  eval->add_option("--config", config_file, "Flat key=value config file");

  try {
    app.parse(argc, argv);
    if (!config_file.empty()) {
      CLI::App* active = app.get_subcommands().front();
      const auto extra = config_file_args(active, config_file);
      if (!extra.empty()) {
        std::vector<std::string> args(argv + 1, argv + argc);
        args.insert(args.end(), extra.begin(), extra.end());
        app.clear();
        std::reverse(args.begin(), args.end());  // CLI11 vector parse is reversed
        app.parse(args);
      }
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const config_usage_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*analyze) return cmd_analyze(analyze, analyze_args);
    if (*gen) return cmd_gen_sbm(gen_args);
    if (*train) return cmd_train(train, train_args);
    if (*embed) return cmd_embed(embed, embed_args);
    if (*eval) return cmd_eval(eval, eval_args);
  } catch (const config_usage_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const compat_error& e) {
    std::cerr << "compatibility error: " << e.what() << '\n';
    return kExitCompat;
  } catch (const shape_error& e) {
    std::cerr << "compatibility error: " << e.what() << '\n';
    return kExitCompat;
  } catch (const graph_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const io_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const value_error& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return 0;
}
