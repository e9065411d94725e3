#include "rewardlab_cli/commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "rewardlab/checkpoint.hpp"
#include "rewardlab/errors.hpp"
#include "rewardlab/evalharness.hpp"
#include "rewardlab/rng.hpp"
#include "rewardlab/synthbench.hpp"

namespace rewardlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& err) {
  if (dynamic_cast<const StalenessError*>(&err)) return kStale;
  if (dynamic_cast<const DivergenceError*>(&err)) return kDivergence;
  if (dynamic_cast<const DataError*>(&err)) return kData;
  return kUsage;
}

namespace {

constexpr const char* kEmbeddingsKind = "embeddings";
constexpr const char* kDiffusionKind = "diffusion";
constexpr const char* kBeliefsKind = "beliefs";
constexpr const char* kPolicyKind = "policy";

std::uint64_t file_fingerprint(const fs::path& path) {
  return fnv1a64(read_file_bytes(path));
}

void refuse_existing(const std::vector<fs::path>& outputs, bool force) {
  if (force) return;
  for (const auto& p : outputs) {
    if (fs::exists(p)) {
      throw ConfigError("refusing to overwrite " + p.string() + " (pass --force)");
    }
  }
}

void echo_config(const RunConfig& cfg, const std::string& command) {
  const fs::path dir = cfg.out() / "resolved";
  fs::create_directories(dir);
  write_file_bytes(dir / (command + ".conf"), cfg.to_text());
}

// Re-raises divergence with the stage named, keeping the exit code.
template <typename F>
auto in_stage(const std::string& stage, F&& body) {
  try {
    return body();
  } catch (const DivergenceError& err) {
    throw DivergenceError(stage + ": " + err.what());
  }
}

// Lineage stamped into every artifact: the hash of the config keys that shaped
// it and the fingerprints of the artifacts it was computed from.
json lineage(std::uint64_t config_hash, const std::vector<std::pair<std::string, std::uint64_t>>&
                                            upstream) {
  json up = json::object();
  for (const auto& [name, fp] : upstream) up[name] = fingerprint_hex(fp);
  return {{"config", fingerprint_hex(config_hash)}, {"upstream", up}};
}

void check_lineage(const json& header, const std::string& what, std::uint64_t config_hash,
                   const std::vector<std::pair<std::string, std::uint64_t>>& upstream) {
  if (!header.contains("lineage")) throw StalenessError(what + " carries no lineage record");
  const json& lin = header["lineage"];
  if (lin.value("config", "") != fingerprint_hex(config_hash)) {
    throw StalenessError(what + " was built with a different configuration; rerun its stage");
  }
  for (const auto& [name, fp] : upstream) {
    if (!lin["upstream"].contains(name) || lin["upstream"][name] != fingerprint_hex(fp)) {
      throw StalenessError(what + " is stale: " + name + " changed since it was built");
    }
  }
}

Checkpoint read_artifact(const fs::path& path, const std::string& kind, const std::string& stage) {
  if (!fs::exists(path)) {
    throw StalenessError("missing " + path.string() + "; run " + stage + " first");
  }
  return read_checkpoint(path, kind);
}

std::uint64_t dataset_hash(const RunConfig& cfg) { return cfg.section_hash({"seed", "dataset"}); }
std::uint64_t embed_hash(const RunConfig& cfg) { return cfg.section_hash({"seed", "embed"}); }
std::uint64_t diffusion_hash(const RunConfig& cfg) {
  return cfg.section_hash({"seed", "diffusion"});
}
std::uint64_t beliefs_hash(const RunConfig& cfg) { return cfg.section_hash({"seed", "world"}); }
std::uint64_t policy_hash(const RunConfig& cfg) {
  return cfg.section_hash({"seed", "penalty", "env", "policy"});
}

ColumnSchema normalized_schema(double rating_min, double rating_max) {
  ColumnSchema s;
  s.delimiter = ',';
  s.has_header = true;
  s.user_col = 0;
  s.item_col = 1;
  s.rating_col = 2;
  s.timestamp_col = 4;
  s.rating_min = rating_min;
  s.rating_max = rating_max;
  return s;
}

std::string csv_column(const std::string& name, const std::vector<double>& values) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch," << name << '\n';
  for (std::size_t k = 0; k < values.size(); ++k) out << k + 1 << ',' << values[k] << '\n';
  return out.str();
}

struct WorldArtifacts {
  EmbeddingTable embeddings;
  BeliefTable beliefs;
  std::uint64_t embeddings_fp = 0;
  std::uint64_t beliefs_fp = 0;
};

EmbeddingTable load_embeddings(const RunConfig& cfg, const LoadedDataset& data,
                               std::uint64_t* fp_out) {
  const Layout lay{cfg.out()};
  const Checkpoint ckpt = read_artifact(lay.embeddings(), kEmbeddingsKind, "train-embeddings");
  check_lineage(ckpt.header, "embedding checkpoint", embed_hash(cfg),
                {{"dataset", data.fingerprint}});
  if (fp_out) *fp_out = file_fingerprint(lay.embeddings());
  return embeddings_from_checkpoint(ckpt);
}

WorldArtifacts load_world(const RunConfig& cfg, const LoadedDataset& data) {
  const Layout lay{cfg.out()};
  WorldArtifacts w;
  w.embeddings = load_embeddings(cfg, data, &w.embeddings_fp);
  const Checkpoint diff = read_artifact(lay.diffusion(), kDiffusionKind, "train-world");
  check_lineage(diff.header, "diffusion checkpoint", diffusion_hash(cfg),
                {{"embeddings", w.embeddings_fp}});
  const DiffusionModel model = diffusion_from_checkpoint(diff);
  const Checkpoint bel = read_artifact(lay.beliefs(), kBeliefsKind, "train-world");
  check_lineage(bel.header, "belief table", beliefs_hash(cfg),
                {{"diffusion", file_fingerprint(lay.diffusion())}});
  w.beliefs = beliefs_from_checkpoint(bel);
  if (w.beliefs.model_fingerprint() != diffusion_fingerprint(model)) {
    throw StalenessError("belief table was computed from a different diffusion model");
  }
  w.beliefs_fp = file_fingerprint(lay.beliefs());
  return w;
}

Environment make_env(const RunConfig& cfg, const LoadedDataset& data, const WorldArtifacts& w,
                     const KGramStore& store) {
  Environment env;
  env.beliefs = &w.beliefs;
  env.store = &store;
  env.embeddings = &w.embeddings;
  env.penalty = cfg.penalty();
  env.config = cfg.env();
  env.config.item_categories = data.categories;
  return env;
}

KGramStore make_store(const RunConfig& cfg, const LoadedDataset& data) {
  const PenaltyConfig p = cfg.penalty();
  return build_kgram_store(data.split.train, p.k, data.log.num_items(), p.smoothing);
}

EmbeddingTable train_and_write_embeddings(const RunConfig& cfg, const LoadedDataset& data,
                                          std::ostream& log) {
  const Layout lay{cfg.out()};
  const EmbeddingConfig ec = cfg.embedding();
  auto result = in_stage("train-embeddings", [&] {
    return train_embeddings(data.split.train, data.log.num_users(), data.log.num_items(), ec);
  });
  fs::create_directories(lay.world_dir());
  Checkpoint ckpt = to_checkpoint(result.table, ec);
  ckpt.header["lineage"] = lineage(embed_hash(cfg), {{"dataset", data.fingerprint}});
  write_checkpoint(lay.embeddings(), ckpt, kEmbeddingsKind);
  write_file_bytes(lay.world_dir() / "embed_rmse.csv", csv_column("train_rmse", result.epoch_rmse));
  log << "embeddings: d=" << ec.dim << " train RMSE " << result.train_rmse() << ", held-out RMSE "
      << rmse(result.table, data.split.test) << '\n';
  return embeddings_from_checkpoint(read_checkpoint(lay.embeddings(), kEmbeddingsKind));
}

}  // namespace

LoadedDataset load_dataset(const RunConfig& cfg) {
  const Layout lay{cfg.out()};
  if (!fs::exists(lay.manifest())) {
    throw StalenessError("no ingested dataset under " + cfg.out().string() + "; run ingest first");
  }
  const std::string manifest_text = read_file_bytes(lay.manifest());
  json manifest;
  try {
    manifest = json::parse(manifest_text);
  } catch (const json::exception& err) {
    throw FormatError("dataset manifest is not valid JSON: " + std::string(err.what()));
  }
  if (manifest.value("config", "") != fingerprint_hex(dataset_hash(cfg))) {
    throw StalenessError("dataset settings changed since ingest; rerun ingest");
  }
  const fs::path source = cfg.get("dataset.path");
  if (fs::exists(source) &&
      manifest.value("source", "") != fingerprint_hex(file_fingerprint(source))) {
    throw StalenessError("dataset file " + source.string() + " changed since ingest");
  }

  LoadedDataset d;
  d.fingerprint = fnv1a64(manifest_text);
  d.log = load_log(lay.events(), normalized_schema(manifest.at("rating_min").get<double>(),
                                                   manifest.at("rating_max").get<double>()));
  std::set<std::pair<UserId, std::uint32_t>> test;
  for (const auto& pair : manifest.at("split").at("test")) {
    test.emplace(pair.at(0).get<UserId>(), pair.at(1).get<std::uint32_t>());
  }
  d.split.split_fraction = manifest.at("split").at("fraction").get<double>();
  d.split.seed = cfg.seed();
  for (const auto& e : d.log.events) {
    (test.count({e.user, e.position}) ? d.split.test : d.split.train).push_back(e);
  }
  if (fs::exists(lay.categories())) d.categories = load_categories(lay.categories(), d.log.items);
  return d;
}

void cmd_gen_synthetic(const RunConfig& cfg, bool force, std::ostream& log) {
  const fs::path dir = cfg.out();
  refuse_existing({dir / "events.csv", dir / "categories.csv", dir / "truth.ckpt"}, force);
  const SynthConfig sc = cfg.synth();
  fs::create_directories(dir);
  const SyntheticData data = generate(sc);
  write_synthetic(dir, data, sc);
  echo_config(cfg, "gen-synthetic");
  log << "gen-synthetic: " << data.events.size() << " events over " << sc.users << " users and "
      << sc.items << " items written to " << dir.string() << '\n';
}

void cmd_ingest(const RunConfig& cfg, bool force, std::ostream& log) {
  const Layout lay{cfg.out()};
  refuse_existing({lay.manifest(), lay.events()}, force);
  const fs::path source = cfg.get("dataset.path");
  const ColumnSchema schema = cfg.schema();
  const InteractionLog data = load_log(source, schema);
  const DatasetSplit split = split_dataset(data.events, cfg.number("dataset.split"), cfg.seed());

  fs::create_directories(lay.dataset_dir());
  write_normalized_log(lay.events(), data);
  const std::string categories = cfg.get("dataset.categories");
  if (!categories.empty()) {
    load_categories(categories, data.items);  // validates coverage before copying
    write_file_bytes(lay.categories(), read_file_bytes(categories));
  } else if (fs::exists(lay.categories())) {
    fs::remove(lay.categories());
  }

  json test = json::array();
  for (const auto& e : split.test) test.push_back({e.user, e.position});
  const json manifest = {{"format", "rewardlab-dataset"},
                         {"config", fingerprint_hex(dataset_hash(cfg))},
                         {"source", fingerprint_hex(file_fingerprint(source))},
                         {"rating_min", schema.rating_min},
                         {"rating_max", schema.rating_max},
                         {"events", data.events.size()},
                         {"users", data.num_users()},
                         {"items", data.num_items()},
                         {"split",
                          {{"fraction", split.split_fraction},
                           {"train", split.train.size()},
                           {"test_count", split.test.size()},
                           {"test", test}}}};
  write_file_bytes(lay.manifest(), manifest.dump(1) + "\n");
  echo_config(cfg, "ingest");
  log << "ingest: " << data.events.size() << " events, " << data.num_users() << " users, "
      << data.num_items() << " items; split " << split.train.size() << " train / "
      << split.test.size() << " test\n";
}

void cmd_train_embeddings(const RunConfig& cfg, bool force, std::ostream& log) {
  const Layout lay{cfg.out()};
  refuse_existing({lay.embeddings()}, force);
  const LoadedDataset data = load_dataset(cfg);
  train_and_write_embeddings(cfg, data, log);
  echo_config(cfg, "train-embeddings");
}

void cmd_train_world(const RunConfig& cfg, bool force, std::ostream& log) {
  const Layout lay{cfg.out()};
  refuse_existing({lay.diffusion(), lay.beliefs()}, force);
  const LoadedDataset data = load_dataset(cfg);

  // Fresh embeddings from train-embeddings are reused; anything else is rebuilt.
  EmbeddingTable emb;
  std::uint64_t emb_fp = 0;
  bool reused = false;
  if (fs::exists(lay.embeddings())) {
    try {
      emb = load_embeddings(cfg, data, &emb_fp);
      reused = true;
    } catch (const StalenessError&) {
      refuse_existing({lay.embeddings()}, force);
    }
  }
  if (reused) {
    log << "embeddings: reusing " << lay.embeddings().string() << '\n';
  } else {
    emb = train_and_write_embeddings(cfg, data, log);
    emb_fp = file_fingerprint(lay.embeddings());
  }

  const DiffusionConfig dc = cfg.diffusion();
  auto trained = in_stage("train-world/diffusion", [&] {
    return train_diffusion(data.split.train, emb, make_diffusion_model(2 * emb.dim, dc), dc);
  });
  Checkpoint dckpt = to_checkpoint(trained.model, dc);
  dckpt.header["lineage"] = lineage(diffusion_hash(cfg), {{"embeddings", emb_fp}});
  write_checkpoint(lay.diffusion(), dckpt, kDiffusionKind);
  write_file_bytes(lay.world_dir() / "diffusion_loss.csv",
                   csv_column("loss", trained.epoch_loss));
  // Sample from the stored (32-bit) model so later stages see the same one.
  const DiffusionModel model =
      diffusion_from_checkpoint(read_checkpoint(lay.diffusion(), kDiffusionKind));
  log << "diffusion: " << dc.epochs << " epochs, loss " << trained.epoch_loss.front() << " -> "
      << trained.epoch_loss.back() << '\n';

  const BeliefTable table = build_belief_table(model, emb, cfg.beliefs());
  Checkpoint bckpt = to_checkpoint(table);
  bckpt.header["lineage"] =
      lineage(beliefs_hash(cfg), {{"diffusion", file_fingerprint(lay.diffusion())}});
  write_checkpoint(lay.beliefs(), bckpt, kBeliefsKind);

  double sse = 0.0;
  for (const auto& e : data.split.test) {
    const double d = table.at(e.user, e.item).mean - e.reward;
    sse += d * d;
  }
  const double n = static_cast<double>(std::max<std::size_t>(data.split.test.size(), 1));
  log << "beliefs: " << table.users() << " x " << table.items() << " pairs, M=" << table.samples()
      << ", held-out RMSE " << std::sqrt(sse / n) << " (matrix factorization "
      << rmse(emb, data.split.test) << ")\n"
      << "diffusion fingerprint " << fingerprint_hex(table.model_fingerprint()) << '\n';
  echo_config(cfg, "train-world");
}

void cmd_train_policy(const RunConfig& cfg, bool force, std::ostream& log) {
  const Layout lay{cfg.out()};
  refuse_existing({lay.policy()}, force);
  const LoadedDataset data = load_dataset(cfg);
  const WorldArtifacts world = load_world(cfg, data);
  const KGramStore store = make_store(cfg, data);
  const Environment env = make_env(cfg, data, world, store);

  const ActorCritic init = make_actor_critic(world.embeddings.item_vectors, world.embeddings.items,
                                             world.embeddings.dim, cfg.actor_critic());
  const PolicyTrainConfig tc = cfg.policy_training();
  auto trained = in_stage("train-policy", [&] { return train_policy(init, env, tc); });

  fs::create_directories(lay.policy_dir());
  Checkpoint ckpt = to_checkpoint(trained.model);
  ckpt.header["lineage"] = lineage(
      policy_hash(cfg), {{"beliefs", world.beliefs_fp}, {"embeddings", world.embeddings_fp}});
  write_checkpoint(lay.policy(), ckpt, kPolicyKind);
  write_file_bytes(lay.policy_dir() / "learning_curve.csv", learning_curve_csv(trained.curve));
  write_file_bytes(lay.policy_dir() / "kgram.txt", store.to_text());

  const std::size_t tail = std::min<std::size_t>(50, trained.curve.size());
  double first = 0.0;
  double last = 0.0;
  for (std::size_t k = 0; k < tail; ++k) {
    first += trained.curve[k].r_tra;
    last += trained.curve[trained.curve.size() - 1 - k].r_tra;
  }
  if (tail > 0) {
    log << "train-policy: " << tc.episodes << " episodes, mean R_tra first " << tail << ": "
        << first / static_cast<double>(tail) << ", last " << tail << ": "
        << last / static_cast<double>(tail) << '\n';
  }
  echo_config(cfg, "train-policy");
}

void cmd_eval(const RunConfig& cfg, bool force, std::ostream& log) {
  const Layout lay{cfg.out()};
  refuse_existing({lay.report()}, force);
  const LoadedDataset data = load_dataset(cfg);
  const WorldArtifacts world = load_world(cfg, data);
  const Checkpoint pckpt = read_artifact(lay.policy(), kPolicyKind, "train-policy");
  check_lineage(pckpt.header, "policy checkpoint", policy_hash(cfg),
                {{"beliefs", world.beliefs_fp}, {"embeddings", world.embeddings_fp}});
  const ActorCritic model = actor_critic_from_checkpoint(pckpt);
  const KGramStore store = make_store(cfg, data);
  const Environment env = make_env(cfg, data, world, store);

  const std::uint64_t fp = fnv1a64(
      fingerprint_hex(cfg.section_hash({"seed", "dataset", "embed", "diffusion", "world",
                                        "penalty", "env", "policy", "eval"})) +
      fingerprint_hex(file_fingerprint(lay.policy())));
  ActorCriticPolicy policy(model, world.embeddings, env.config);
  const auto trajectories =
      evaluation_rollouts(policy, env, cfg.count("eval.episodes"), derive_seed(cfg.seed(), "eval"));
  const EvalReport report = report_from(trajectories, fp);

  fs::create_directories(lay.eval_dir());
  json j = report.to_json();
  j["seed"] = cfg.seed();
  write_file_bytes(lay.report(), j.dump(1) + "\n");
  const std::string table = format_report_table({{"policy", report}});
  write_file_bytes(lay.eval_dir() / "report.txt", table);
  std::string dump;
  for (const auto& t : trajectories) dump += t.to_json().dump() + "\n";
  write_file_bytes(lay.eval_dir() / "trajectories.jsonl", dump);
  log << table;
  echo_config(cfg, "eval");
}

bool cmd_ablate(const RunConfig& cfg, bool force, std::ostream& log) {
  const Layout lay{cfg.out()};
  refuse_existing({lay.ablation_dir() / "ablation.json"}, force);
  const LoadedDataset data = load_dataset(cfg);
  const WorldArtifacts world = load_world(cfg, data);
  const KGramStore store = make_store(cfg, data);
  const BeliefTable point = build_point_belief_table(world.embeddings, world.embeddings_fp);

  LabComponents lab;
  lab.embeddings = &world.embeddings;
  lab.diffusion_beliefs = &world.beliefs;
  lab.point_beliefs = &point;
  lab.store = &store;
  lab.penalty = cfg.penalty();
  lab.env = cfg.env();
  lab.env.item_categories = data.categories;
  lab.actor_critic = cfg.actor_critic();
  lab.train_episodes = cfg.count("policy.episodes");
  lab.eval_episodes = cfg.count("eval.episodes");

  const auto outcomes = run_ablation(AblationSpec{}, lab, derive_seed(cfg.seed(), "ablation"));
  fs::create_directories(lay.ablation_dir());
  const json all = ablation_to_json(outcomes);
  bool ok = true;
  for (const auto& [name, outcome] : outcomes) {
    write_file_bytes(lay.ablation_dir() / (name + ".json"), all[name].dump(1) + "\n");
    ok = ok && outcome.ok();
  }
  write_file_bytes(lay.ablation_dir() / "ablation.json", all.dump(1) + "\n");
  const std::string table = ablation_table(outcomes);
  write_file_bytes(lay.ablation_dir() / "ablation.txt", table);
  log << table;
  echo_config(cfg, "ablate");
  return ok;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Offline RL recommendation lab: world model, reward shaping and A2C policy",
               "rewardlab"};
  app.require_subcommand(1);

  struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
  } flags;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-synthetic", "write a synthetic benchmark (events, categories, ground truth)"},
      {"ingest", "normalize an interaction file and write the train/test split"},
      {"train-embeddings", "fit matrix-factorization embeddings"},
      {"train-world", "fit embeddings, the diffusion world model and its belief table"},
      {"train-policy", "train the actor-critic policy on shaped rewards"},
      {"eval", "evaluate the trained policy on raw rewards"},
      {"ablate", "train and evaluate the five ablation variants"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "key = value configuration file");
    sub->add_option("--seed", flags.seed, "override the master seed");
    sub->add_option("--out", flags.out, "override the output directory");
    sub->add_flag("--force", flags.force, "overwrite existing outputs");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    RunConfig cfg = flags.config.empty() ? RunConfig{} : RunConfig::load(flags.config);
    if (flags.seed) cfg.set("seed", std::to_string(*flags.seed));
    if (!flags.out.empty()) cfg.set("out", flags.out);

    if (command == "gen-synthetic") {
      cmd_gen_synthetic(cfg, flags.force, out);
    } else if (command == "ingest") {
      cmd_ingest(cfg, flags.force, out);
    } else if (command == "train-embeddings") {
      cmd_train_embeddings(cfg, flags.force, out);
    } else if (command == "train-world") {
      cmd_train_world(cfg, flags.force, out);
    } else if (command == "train-policy") {
      cmd_train_policy(cfg, flags.force, out);
    } else if (command == "eval") {
      cmd_eval(cfg, flags.force, out);
    } else if (command == "ablate") {
      if (!cmd_ablate(cfg, flags.force, out)) {
        err << "error: at least one ablation variant diverged\n";
        return kDivergence;
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << command << ": " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kOk;
}

}  // namespace rewardlab::cli
