#include "rewardlab/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rewardlab/errors.hpp"
#include "rewardlab/rng.hpp"

namespace rewardlab {

void SynthConfig::validate() const {
  if (users < 1 || items < 1 || categories < 1 || events_per_user < 1 || latent_dim < 1) {
    throw ConfigError("synthetic sizes must all be >= 1");
  }
  if (!(sparsity_skew >= 0.0 && sparsity_skew <= 1.0)) {
    throw ConfigError("sparsity_skew must lie in [0, 1]");
  }
  if (!(sparse_factor > 0.0 && sparse_factor <= 1.0)) {
    throw ConfigError("sparse_factor must lie in (0, 1]");
  }
  if (!(temperature > 0.0) || !(stickiness > 0.0) || !(noise_sigma >= 0.0)) {
    throw ConfigError("temperature and stickiness must be > 0, noise >= 0");
  }
}

SyntheticData generate(const SynthConfig& cfg) {
  cfg.validate();
  SyntheticData data;
  SyntheticWorld& w = data.world;
  w.users = cfg.users;
  w.items = cfg.items;
  w.categories = cfg.categories;
  const std::size_t L = cfg.latent_dim;

  Rng latent_rng = make_stream(derive_seed(cfg.seed, "synth-latent"));
  std::vector<double> centroids(cfg.categories * L);
  for (auto& c : centroids) c = standard_normal(latent_rng);
  w.item_category.resize(cfg.items);
  std::vector<double> item_latent(cfg.items * L);
  for (std::size_t i = 0; i < cfg.items; ++i) {
    w.item_category[i] = static_cast<int>(i % cfg.categories);
    for (std::size_t k = 0; k < L; ++k) {
      item_latent[i * L + k] =
          centroids[static_cast<std::size_t>(w.item_category[i]) * L + k] +
          0.5 * standard_normal(latent_rng);
    }
  }
  std::vector<double> user_latent(cfg.users * L);
  for (auto& p : user_latent) p = standard_normal(latent_rng);

  // Standardize the dot product (entries of p ~ N(0,1), q ~ N(0,1.25)).
  const double scale = std::sqrt(1.25 * static_cast<double>(L));
  w.true_reward.resize(cfg.users * cfg.items);
  for (std::size_t u = 0; u < cfg.users; ++u) {
    for (std::size_t i = 0; i < cfg.items; ++i) {
      double dot = 0.0;
      for (std::size_t k = 0; k < L; ++k) dot += user_latent[u * L + k] * item_latent[i * L + k];
      w.true_reward[u * cfg.items + i] =
          static_cast<float>(std::clamp(0.5 + 0.25 * dot / scale, 0.0, 1.0));
    }
  }

  Rng pop_rng = make_stream(derive_seed(cfg.seed, "synth-popularity"));
  std::vector<std::size_t> perm(cfg.items);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), pop_rng);
  w.sparse_item.assign(cfg.items, 0);
  const auto n_sparse = static_cast<std::size_t>(
      std::floor(cfg.sparsity_skew * static_cast<double>(cfg.items)));
  for (std::size_t k = 0; k < n_sparse; ++k) w.sparse_item[perm[k]] = 1;
  std::vector<double> popularity(cfg.items);
  for (auto& p : popularity) p = std::exp(0.5 * standard_normal(pop_rng));
  const double n_dense = static_cast<double>(cfg.items - n_sparse);
  const double sparse_mass = cfg.sparse_factor * static_cast<double>(n_sparse);
  const double p_sparse = sparse_mass / (sparse_mass + n_dense);

  Rng log_rng = make_stream(derive_seed(cfg.seed, "synth-log"));
  const bool replace = cfg.events_per_user > cfg.items;
  std::vector<double> weight(cfg.items);
  for (std::size_t u = 0; u < cfg.users; ++u) {
    std::vector<std::uint8_t> used(cfg.items, 0);
    std::size_t left[2] = {cfg.items - n_sparse, n_sparse};
    int previous_category = -1;
    for (std::size_t n = 0; n < cfg.events_per_user; ++n) {
      const bool want_sparse = uniform01(log_rng) < p_sparse;
      int pool = want_sparse ? 1 : 0;
      if (left[pool] == 0) pool = 1 - pool;
      double total = 0.0;
      for (std::size_t i = 0; i < cfg.items; ++i) {
        if (w.sparse_item[i] != pool || (!replace && used[i])) {
          weight[i] = 0.0;
          continue;
        }
        double wi = std::exp(w.reward(u, i) / cfg.temperature) * popularity[i];
        if (w.item_category[i] == previous_category) wi *= cfg.stickiness;
        total += (weight[i] = wi);
      }
      double pick = uniform01(log_rng) * total;
      std::size_t item = cfg.items;
      for (std::size_t i = 0; i < cfg.items; ++i) {
        if (weight[i] == 0.0) continue;
        item = i;
        if ((pick -= weight[i]) < 0.0) break;
      }
      if (!replace) --left[pool];
      used[item] = 1;
      previous_category = w.item_category[item];
      double rating = w.reward(u, item);
      if (cfg.noise_sigma > 0.0) {
        rating = std::clamp(rating + cfg.noise_sigma * standard_normal(log_rng), 0.0, 1.0);
      }
      data.events.push_back({u, item, rating});
    }
  }
  return data;
}

std::string user_label(std::size_t u) { return "u" + std::to_string(u); }
std::string item_label(std::size_t i) { return "i" + std::to_string(i); }

std::size_t parse_label(const std::string& label) {
  if (label.size() < 2 || (label[0] != 'u' && label[0] != 'i')) {
    throw DataError("not a synthetic label: " + label);
  }
  try {
    return std::stoul(label.substr(1));
  } catch (const std::exception&) {
    throw DataError("not a synthetic label: " + label);
  }
}

std::string event_file_text(const SyntheticData& data) {
  std::ostringstream out;
  out.precision(9);  // round-trips binary32
  for (const auto& e : data.events) {
    out << user_label(e.user) << ',' << item_label(e.item) << ',' << e.rating << '\n';
  }
  return out.str();
}

std::string category_file_text(const SyntheticWorld& world) {
  std::ostringstream out;
  for (std::size_t i = 0; i < world.items; ++i) {
    out << item_label(i) << ',' << world.item_category[i] << '\n';
  }
  return out.str();
}

Checkpoint to_checkpoint(const SyntheticWorld& world, const SynthConfig& cfg) {
  Checkpoint ckpt;
  ckpt.header["U"] = world.users;
  ckpt.header["I"] = world.items;
  ckpt.header["C"] = world.categories;
  ckpt.header["seed"] = cfg.seed;
  ckpt.header["item_category"] = world.item_category;
  ckpt.header["sparse_item"] = world.sparse_item;
  ckpt.header["config"] = {{"events_per_user", cfg.events_per_user},
                           {"sparsity_skew", cfg.sparsity_skew},
                           {"sparse_factor", cfg.sparse_factor},
                           {"latent_dim", cfg.latent_dim},
                           {"noise_sigma", cfg.noise_sigma},
                           {"temperature", cfg.temperature},
                           {"stickiness", cfg.stickiness}};
  ckpt.blob = world.true_reward;
  return ckpt;
}

SyntheticWorld world_from_checkpoint(const Checkpoint& ckpt) {
  SyntheticWorld w;
  w.users = ckpt.field("U").get<std::size_t>();
  w.items = ckpt.field("I").get<std::size_t>();
  w.categories = ckpt.field("C").get<std::size_t>();
  w.item_category = ckpt.field("item_category").get<std::vector<int>>();
  w.sparse_item = ckpt.field("sparse_item").get<std::vector<std::uint8_t>>();
  if (ckpt.blob.size() != w.users * w.items) throw FormatError("truth grid has wrong size");
  w.true_reward = ckpt.blob;
  return w;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data,
                     const SynthConfig& cfg) {
  write_file_bytes(dir / "events.csv", event_file_text(data));
  write_file_bytes(dir / "categories.csv", category_file_text(data.world));
  write_checkpoint(dir / "truth.ckpt", to_checkpoint(data.world, cfg), "truth");
}

std::vector<int> load_categories(const std::filesystem::path& path, const IndexMap& items) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open category file " + path.string());
  std::vector<int> categories(items.size(), -1);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("expected 'item,category'", line_no);
    const auto dense = items.find(line.substr(0, comma));
    if (!dense) continue;
    try {
      categories[*dense] = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw ParseError("category is not an integer", line_no);
    }
  }
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] < 0) {
      throw DataError("item " + items.raw(static_cast<std::uint32_t>(i)) +
                      " has no category in " + path.string());
    }
  }
  return categories;
}

}  // namespace rewardlab
