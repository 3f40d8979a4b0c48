#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kgc/analysis.hpp"
#include "kgc/config.hpp"
#include "kgc/ranking.hpp"
#include "kgc/trainer.hpp"

namespace kgc::cli {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::string out_dir;
  std::string checkpoint;
  std::string seeds;  // comma-separated, train only
  long long seed = -1;
  long long threads = -1;
};

inline void add_common_options(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "config file (key = value lines)");
  cmd->add_option("--set", args.overrides, "override a config key, as key=value")
      ->take_all();
  cmd->add_option("--out", args.out_dir, "output directory (output.dir)");
  cmd->add_option("--checkpoint", args.checkpoint, "checkpoint path (eval.checkpoint)");
  cmd->add_option("--seed", args.seed, "training seed (train.seed)");
  cmd->add_option("--threads", args.threads, "worker threads (runtime.threads)");
}

inline RunConfig build_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = RunConfig::from_file(args.config_path);
  for (const std::string& kv : args.overrides) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!args.out_dir.empty()) cfg.set("output.dir", args.out_dir);
  if (!args.checkpoint.empty()) cfg.set("eval.checkpoint", args.checkpoint);
  if (args.seed >= 0) cfg.set("train.seed", std::to_string(args.seed));
  if (args.threads >= 0) cfg.set("runtime.threads", std::to_string(args.threads));
  return cfg;
}

inline TripleStore load_store(const RunConfig& cfg) {
  std::string train = cfg.get("data.train");
  std::string valid = cfg.get("data.valid");
  std::string test = cfg.get("data.test");
  return load_triples(train, valid, test);
}

inline void write_metrics_json(const RankingReport& r, const std::string& path) {
  nlohmann::json j;
  j["mrr"] = r.mrr;
  j["hits1"] = r.hits1;
  j["hits3"] = r.hits3;
  j["hits10"] = r.hits10;
  j["n_queries"] = r.n_queries;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

inline void write_ranks_tsv(const RankingReport& r, const std::vector<Triple>& split,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t i = 0; i < split.size(); ++i) {
    out << "tail\t" << split[i].head << '\t' << split[i].relation << '\t' << split[i].tail << '\t'
        << r.tail_ranks[i] << '\n';
    out << "head\t" << split[i].head << '\t' << split[i].relation << '\t' << split[i].tail << '\t'
        << r.head_ranks[i] << '\n';
  }
}

inline const std::vector<Triple>& pick_split(const TripleStore& store, const std::string& name) {
  if (name == "train") return store.train;
  if (name == "valid") return store.valid;
  if (name == "test") return store.test;
  throw ConfigError("eval.split must be train|valid|test, got '" + name + "'");
}

// Raw (unmasked) signatures of every entity, from the model's final states.
inline Tensor raw_signatures(const Model& model, const EvalModel& ev) {
  std::size_t k = model.config.apim.mode_count;
  Tensor sigs({ev.entity_states.rows(), k});
  for (std::size_t e = 0; e < ev.entity_states.rows(); ++e) {
    Tensor a = signature(ev.entity_row(e), model.apim.w_a.value());
    for (std::size_t j = 0; j < k; ++j) sigs.at(e, j) = a.data[j];
  }
  return sigs;
}

// ---- commands ----

inline int cmd_ingest_stats(const RunConfig& cfg) {
  TripleStore store = load_store(cfg);
  std::cout << "entities " << store.num_entities() << '\n'
            << "relations " << store.num_relations() << '\n'
            << "train " << store.train.size() << '\n'
            << "valid " << store.valid.size() << '\n'
            << "test " << store.test.size() << '\n';
  if (cfg.has("output.dir")) {
    fs::create_directories(cfg.get("output.dir"));
    export_dictionaries(store, cfg.get("output.dir"));
  }
  return 0;
}

inline void run_one_training(const RunConfig& cfg, const TripleStore& store,
                             const std::string& out_dir, std::uint64_t seed) {
  fs::create_directories(out_dir);
  ModelConfig model_cfg = model_from_config(cfg);
  TrainConfig train_cfg = train_from_config(cfg);
  train_cfg.seed = seed;

  AdjacencyIndex adj;
  const AdjacencyIndex* adj_ptr = nullptr;
  if (model_cfg.encoder) {
    adj = build_adjacency(store);
    adj_ptr = &adj;
  }

  Model model = make_model(model_cfg, store.num_entities(), store.num_relations(), seed);
  TrainResult result = train(store, model, train_cfg, adj_ptr);

  for (const auto& [k, v] : cfg.entries()) result.checkpoint.config_echo.emplace_back(k, v);
  result.checkpoint.config_echo.emplace_back("train.seed.effective", std::to_string(seed));
  save_checkpoint(result.checkpoint,
                  cfg.get_or("train.checkpoint_path", out_dir + "/checkpoint.bin"));

  std::ofstream log(out_dir + "/train.log");
  if (!log) throw IoError("cannot write " + out_dir + "/train.log");
  for (const EpochLog& e : result.log) {
    log << e.epoch << '\t' << e.train_loss << '\t' << e.val_mrr << '\n';
  }

  cfg.write_echo(out_dir + "/config.echo");

  EvalModel ev = freeze(model, adj_ptr);
  RankingReport report = evaluate(ev, store, store.test, train_cfg.threads);
  write_metrics_json(report, out_dir + "/metrics.json");
}

inline int cmd_train(const RunConfig& cfg, const std::string& seeds_csv) {
  TripleStore store = load_store(cfg);
  std::string out_dir = cfg.get("output.dir");
  std::uint64_t base_seed = cfg.get_size("train.seed", 42);

  if (seeds_csv.empty()) {
    run_one_training(cfg, store, out_dir, base_seed);
    return 0;
  }

  // --seeds list: one full run per seed, plus the mean metrics across runs.
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos <= seeds_csv.size()) {
    std::size_t comma = seeds_csv.find(',', pos);
    if (comma == std::string::npos) comma = seeds_csv.size();
    std::string item = seeds_csv.substr(pos, comma - pos);
    if (!item.empty()) seeds.push_back(std::stoull(item));
    pos = comma + 1;
  }
  if (seeds.empty()) throw ConfigError("--seeds: no seeds given");

  nlohmann::json mean;
  double mrr = 0, h1 = 0, h3 = 0, h10 = 0;
  for (std::uint64_t s : seeds) {
    std::string sub = out_dir + "/seed_" + std::to_string(s);
    run_one_training(cfg, store, sub, s);
    std::ifstream in(sub + "/metrics.json");
    nlohmann::json j;
    in >> j;
    mrr += j["mrr"].get<double>();
    h1 += j["hits1"].get<double>();
    h3 += j["hits3"].get<double>();
    h10 += j["hits10"].get<double>();
  }
  auto n = static_cast<double>(seeds.size());
  mean["mrr"] = mrr / n;
  mean["hits1"] = h1 / n;
  mean["hits3"] = h3 / n;
  mean["hits10"] = h10 / n;
  mean["runs"] = seeds.size();
  fs::create_directories(out_dir);
  std::ofstream out(out_dir + "/metrics_mean.json");
  out << mean.dump(2) << '\n';
  return 0;
}

struct LoadedModel {
  Checkpoint checkpoint;
  Model model;
  AdjacencyIndex adj;
  const AdjacencyIndex* adj_ptr = nullptr;
};

inline LoadedModel load_model_for_eval(const RunConfig& cfg, const TripleStore& store) {
  LoadedModel lm{load_checkpoint(cfg.get("eval.checkpoint")),
                 Model{}, AdjacencyIndex{}, nullptr};
  if (lm.checkpoint.n_entities != store.num_entities() ||
      lm.checkpoint.n_relations != store.num_relations()) {
    throw ConfigError("checkpoint was trained on a different dataset (entities/relations differ)");
  }
  lm.model = model_from_checkpoint(lm.checkpoint);
  if (lm.model.config.encoder) {
    lm.adj = build_adjacency(store);
    lm.adj_ptr = &lm.adj;
  }
  return lm;
}

inline int cmd_eval(const RunConfig& cfg) {
  TripleStore store = load_store(cfg);
  LoadedModel lm = load_model_for_eval(cfg, store);
  const std::vector<Triple>& split = pick_split(store, cfg.get_or("eval.split", "test"));

  EvalModel ev = freeze(lm.model, lm.adj_ptr);
  RankingReport report = evaluate(ev, store, split, cfg.get_size("runtime.threads", 1));

  std::string out_dir = cfg.get("output.dir");
  fs::create_directories(out_dir);
  write_metrics_json(report, out_dir + "/metrics.json");
  if (cfg.get_bool("eval.dump_ranks", false)) {
    write_ranks_tsv(report, split, out_dir + "/ranks.tsv");
  }
  cfg.write_echo(out_dir + "/config.echo");
  return 0;
}

inline int cmd_analyze_energy(const RunConfig& cfg) {
  TripleStore store = load_store(cfg);
  LoadedModel lm = load_model_for_eval(cfg, store);
  if (!lm.model.config.use_apim()) {
    throw ConfigError("analyze-energy: checkpoint has no APIM head");
  }
  EvalModel ev = freeze(lm.model, lm.adj_ptr);
  EnergyReport report = energy_curve(raw_signatures(lm.model, ev));
  std::string out_dir = cfg.get("output.dir");
  fs::create_directories(out_dir);
  write_energy_csv(report, out_dir + "/energy.csv");
  return 0;
}

inline int cmd_analyze_importance(const RunConfig& cfg) {
  TripleStore store = load_store(cfg);
  LoadedModel lm = load_model_for_eval(cfg, store);
  if (!lm.model.config.use_apim()) {
    throw ConfigError("analyze-importance: checkpoint has no APIM head");
  }
  EvalModel ev = freeze(lm.model, lm.adj_ptr);
  std::vector<Tensor> transitions;
  transitions.reserve(lm.model.n_relations);
  for (const Var& theta : lm.model.apim.theta) transitions.push_back(transition(theta.value()));
  ImportanceReport report = mode_importance(raw_signatures(lm.model, ev), transitions);
  std::string out_dir = cfg.get("output.dir");
  fs::create_directories(out_dir);
  write_importance_csv(report, out_dir + "/importance.csv");
  return 0;
}

inline int cmd_analyze_oversmoothing(const RunConfig& cfg) {
  TripleStore store = load_store(cfg);
  LoadedModel lm = load_model_for_eval(cfg, store);
  if (!lm.model.config.encoder) {
    throw ConfigError("analyze-oversmoothing: checkpoint has no encoder");
  }
  auto states = encode(*lm.adj_ptr, lm.model.entity_emb, lm.model.encoder);
  OversmoothingProfile profile = oversmoothing_profile(snapshot_states(states));
  std::string out_dir = cfg.get("output.dir");
  fs::create_directories(out_dir);
  write_oversmoothing_csv(profile, out_dir + "/oversmoothing.csv");
  return 0;
}

inline int run(int argc, const char* const* argv) {
  CLI::App app{"knowledge graph completion engine"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint + metrics");
  add_common_options(train_cmd, args);
  train_cmd->add_option("--seeds", args.seeds, "comma-separated seed list; one run per seed");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint with filtered ranking");
  add_common_options(eval_cmd, args);

  auto* energy_cmd = app.add_subcommand("analyze-energy", "cumulative signature energy curve");
  add_common_options(energy_cmd, args);

  auto* importance_cmd =
      app.add_subcommand("analyze-importance", "relation-mode importance matrix");
  add_common_options(importance_cmd, args);

  auto* oversmooth_cmd =
      app.add_subcommand("analyze-oversmoothing", "per-layer mean pairwise cosine distance");
  add_common_options(oversmooth_cmd, args);

  auto* stats_cmd = app.add_subcommand("ingest-stats", "dataset statistics after ingestion");
  add_common_options(stats_cmd, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    RunConfig cfg = build_config(args);
    if (train_cmd->parsed()) return cmd_train(cfg, args.seeds);
    if (eval_cmd->parsed()) return cmd_eval(cfg);
    if (energy_cmd->parsed()) return cmd_analyze_energy(cfg);
    if (importance_cmd->parsed()) return cmd_analyze_importance(cfg);
    if (oversmooth_cmd->parsed()) return cmd_analyze_oversmoothing(cfg);
    if (stats_cmd->parsed()) return cmd_ingest_stats(cfg);
    std::cerr << "error: no command\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace kgc::cli
