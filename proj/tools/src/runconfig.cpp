#include "rewardlab_cli/runconfig.hpp"

#include <charconv>
#include <sstream>

#include "rewardlab/checkpoint.hpp"
#include "rewardlab/errors.hpp"
#include "rewardlab/rng.hpp"

namespace rewardlab::cli {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "master seed; every stochastic stage derives its stream from it"},
      {"out", "runs/default", "output directory shared by all stages"},

      {"dataset.path", "data/synthetic/events.csv", "interaction file to ingest"},
      {"dataset.categories", "data/synthetic/categories.csv",
       "item,category file for the quit rule; empty selects embedding cosine"},
      {"dataset.delimiter", ",", "field delimiter (single character, or 'tab')"},
      {"dataset.has_header", "false", "skip the first line"},
      {"dataset.user_col", "0", "zero-based user column"},
      {"dataset.item_col", "1", "zero-based item column"},
      {"dataset.rating_col", "2", "zero-based rating column"},
      {"dataset.timestamp_col", "-1", "zero-based timestamp column; -1 keeps file order"},
      {"dataset.rating_min", "0", "lowest rating on the file's scale"},
      {"dataset.rating_max", "1", "highest rating on the file's scale"},
      {"dataset.split", "0.8", "per-user train fraction"},

      {"embed.dim", "32", "embedding dimension d"},
      {"embed.epochs", "50", "matrix-factorization epochs"},
      {"embed.lr", "0.01", "matrix-factorization SGD step"},
      {"embed.reg", "0.01", "L2 regularization"},
      {"embed.init_std", "0.1", "std of the initial vectors"},

      {"diffusion.steps", "50", "diffusion steps T"},
      {"diffusion.beta_start", "0.0001", "first beta of the linear schedule"},
      {"diffusion.beta_end", "0.02", "last beta of the linear schedule"},
      {"diffusion.time_embed_dim", "16", "sinusoidal time-embedding width"},
      {"diffusion.hidden", "64", "hidden width of the noise predictor"},
      {"diffusion.epochs", "300", "training epochs"},
      {"diffusion.batch_size", "64", "events per Adam step"},
      {"diffusion.lr", "0.001", "Adam step size"},
      {"diffusion.include_t1", "true", "train on t = 1 as well as 2..T"},

      {"world.samples", "10", "reverse samples M per user-item pair"},
      {"world.threads", "0", "belief-table threads; 0 uses every core"},

      {"penalty.k", "3", "behavior-policy order and P_I sample count"},
      {"penalty.lambda1", "0.05", "uncertainty penalty weight"},
      {"penalty.lambda2", "0.1", "diversity penalty weight"},
      {"penalty.alpha", "0.5", "decay scale alpha"},
      {"penalty.xi", "1.0", "decay rate xi"},
      {"penalty.smoothing", "0.01", "add-lambda smoothing of the behavior policy"},
      {"penalty.omega", "", "fixed blend weight in [0, 1]; empty uses the decay"},

      {"env.max_length", "30", "episode length cap"},
      {"env.window", "4", "recent window W"},
      {"env.quit_threshold", "3", "similar items in the window that make a user quit"},
      {"env.cosine_threshold", "0.9", "cosine similarity used without categories"},
      {"env.no_repeat", "true", "mask items already recommended in the episode"},

      {"policy.hidden", "64", "actor and critic hidden width"},
      {"policy.gamma", "0.9", "discount"},
      {"policy.entropy_coef", "0.01", "entropy bonus"},
      {"policy.lr", "0.01", "actor Adam step size"},
      {"policy.critic_lr", "0.03", "critic Adam step size"},
      {"policy.episodes", "2000", "training episodes"},

      {"eval.episodes", "100", "evaluation episodes"},

      {"synth.users", "20", "synthetic users"},
      {"synth.items", "40", "synthetic items"},
      {"synth.categories", "5", "synthetic item categories"},
      {"synth.events_per_user", "10", "logged events per user"},
      {"synth.sparsity_skew", "0.5", "fraction of sparse items"},
      {"synth.sparse_factor", "0.1", "event rate of a sparse item relative to a dense one"},
      {"synth.latent_dim", "8", "latent dimension of the true reward"},
      {"synth.noise_sigma", "0", "std of Gaussian noise on logged rewards"},
      {"synth.temperature", "0.25", "logging softmax temperature"},
      {"synth.stickiness", "4", "same-category continuation boost"},
  };
  return keys;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

bool is_unhashed(const std::string& key) {
  return key == "out" || key == "dataset.path" || key == "dataset.categories" ||
         key == "world.threads";
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    cfg.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("config file not found: " + path.string());
  }
  return from_text(read_file_bytes(path));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

double RunConfig::number(const std::string& key) const {
  const std::string& text = get(key);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(key + " must be a number, got '" + text + "'");
  }
  return v;
}

std::int64_t RunConfig::integer(const std::string& key) const {
  const std::string& text = get(key);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(key + " must be an integer, got '" + text + "'");
  }
  return v;
}

std::size_t RunConfig::count(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw ConfigError(key + " must be >= 0");
  return static_cast<std::size_t>(v);
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& text = get(key);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key + " must be true or false, got '" + text + "'");
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  std::string section;
  for (const auto& k : config_keys()) {
    const auto dot = k.name.find('.');
    const std::string s = dot == std::string::npos ? "" : k.name.substr(0, dot);
    if (s != section) {
      out << '\n';
      section = s;
    }
    out << "# " << k.help << '\n' << k.name << " = " << values_.at(k.name) << '\n';
  }
  return out.str();
}

std::uint64_t RunConfig::section_hash(std::initializer_list<std::string_view> prefixes) const {
  std::string joined;
  for (const auto& [key, value] : values_) {
    if (is_unhashed(key)) continue;
    for (auto p : prefixes) {
      const bool match = key == p || (key.size() > p.size() && key.compare(0, p.size(), p) == 0 &&
                                      key[p.size()] == '.');
      if (match) {
        joined += key + '=' + value + '\n';
        break;
      }
    }
  }
  return fnv1a64(joined);
}

std::uint64_t RunConfig::seed() const {
  const std::string& text = get("seed");
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("seed must be a non-negative integer, got '" + text + "'");
  }
  return v;
}

ColumnSchema RunConfig::schema() const {
  ColumnSchema s;
  const std::string& delim = get("dataset.delimiter");
  if (delim == "tab") {
    s.delimiter = '\t';
  } else if (delim.size() == 1) {
    s.delimiter = delim[0];
  } else {
    throw ConfigError("dataset.delimiter must be one character or 'tab'");
  }
  s.has_header = flag("dataset.has_header");
  s.user_col = static_cast<int>(integer("dataset.user_col"));
  s.item_col = static_cast<int>(integer("dataset.item_col"));
  s.rating_col = static_cast<int>(integer("dataset.rating_col"));
  s.timestamp_col = static_cast<int>(integer("dataset.timestamp_col"));
  s.rating_min = number("dataset.rating_min");
  s.rating_max = number("dataset.rating_max");
  return s;
}

EmbeddingConfig RunConfig::embedding() const {
  EmbeddingConfig c;
  c.dim = count("embed.dim");
  c.epochs = count("embed.epochs");
  c.lr = number("embed.lr");
  c.reg = number("embed.reg");
  c.init_std = number("embed.init_std");
  c.seed = derive_seed(seed(), "embed");
  return c;
}

DiffusionConfig RunConfig::diffusion() const {
  DiffusionConfig c;
  c.steps = static_cast<int>(integer("diffusion.steps"));
  c.beta_start = number("diffusion.beta_start");
  c.beta_end = number("diffusion.beta_end");
  c.time_embed_dim = count("diffusion.time_embed_dim");
  c.hidden = count("diffusion.hidden");
  c.epochs = count("diffusion.epochs");
  c.batch_size = count("diffusion.batch_size");
  c.lr = number("diffusion.lr");
  c.include_t1 = flag("diffusion.include_t1");
  c.seed = derive_seed(seed(), "diffusion");
  return c;
}

BeliefBuildOptions RunConfig::beliefs() const {
  BeliefBuildOptions b;
  b.samples = count("world.samples");
  if (b.samples == 0) throw ConfigError("world.samples must be >= 1");
  b.threads = count("world.threads");
  b.seed = derive_seed(seed(), "beliefs");
  return b;
}

PenaltyConfig RunConfig::penalty() const {
  PenaltyConfig p;
  p.k = count("penalty.k");
  p.lambda1 = number("penalty.lambda1");
  p.lambda2 = number("penalty.lambda2");
  p.alpha = number("penalty.alpha");
  p.xi = number("penalty.xi");
  p.smoothing = number("penalty.smoothing");
  if (!get("penalty.omega").empty()) p.omega_override = number("penalty.omega");
  p.validate();
  return p;
}

EnvConfig RunConfig::env() const {
  EnvConfig e;
  e.max_length = count("env.max_length");
  e.window = count("env.window");
  e.quit_threshold = count("env.quit_threshold");
  e.cosine_threshold = number("env.cosine_threshold");
  e.no_repeat = flag("env.no_repeat");
  e.validate();
  return e;
}

ActorCriticConfig RunConfig::actor_critic() const {
  ActorCriticConfig a;
  a.hidden = count("policy.hidden");
  a.gamma = number("policy.gamma");
  a.entropy_coef = number("policy.entropy_coef");
  a.lr = number("policy.lr");
  a.critic_lr = number("policy.critic_lr");
  a.seed = derive_seed(seed(), "policy-init");
  return a;
}

PolicyTrainConfig RunConfig::policy_training() const {
  PolicyTrainConfig t;
  t.episodes = count("policy.episodes");
  t.lr = number("policy.lr");
  t.critic_lr = number("policy.critic_lr");
  t.seed = derive_seed(seed(), "policy-train");
  return t;
}

SynthConfig RunConfig::synth() const {
  SynthConfig s;
  s.users = count("synth.users");
  s.items = count("synth.items");
  s.categories = count("synth.categories");
  s.events_per_user = count("synth.events_per_user");
  s.sparsity_skew = number("synth.sparsity_skew");
  s.sparse_factor = number("synth.sparse_factor");
  s.latent_dim = count("synth.latent_dim");
  s.noise_sigma = number("synth.noise_sigma");
  s.temperature = number("synth.temperature");
  s.stickiness = number("synth.stickiness");
  s.seed = seed();
  s.validate();
  return s;
}

}  // namespace rewardlab::cli
