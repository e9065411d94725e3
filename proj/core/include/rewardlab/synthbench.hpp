#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rewardlab/checkpoint.hpp"
#include "rewardlab/dataset.hpp"

namespace rewardlab {

struct SynthConfig {
  std::size_t users = 100;
  std::size_t items = 100;
  std::size_t categories = 5;
  std::size_t events_per_user = 30;
  double sparsity_skew = 0.5;  // fraction of items marked sparse
  double sparse_factor = 0.1;  // per-item event rate of sparse vs dense items
  std::size_t latent_dim = 8;
  double noise_sigma = 0.0;  // optional N(0, sigma) on logged rewards, clipped
  // Logging policy: each event first picks the sparse or dense pool so that a
  // sparse item gets `sparse_factor` times the events of a dense one, then an
  // unseen item inside the pool with weight exp(true_reward / temperature)
  // times a log-normal item popularity,
  // boosted by `stickiness` when it continues the previous category.
  double temperature = 0.25;
  double stickiness = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Ground truth behind a generated log. Indices are the generator's own
/// (labels "u<n>" / "i<n>" in the event file).
struct SyntheticWorld {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t categories = 0;
  std::vector<float> true_reward;  // users x items
  std::vector<int> item_category;
  std::vector<std::uint8_t> sparse_item;

  double reward(std::size_t u, std::size_t i) const { return true_reward[u * items + i]; }

  friend bool operator==(const SyntheticWorld&, const SyntheticWorld&) = default;
};

struct SyntheticEvent {
  std::size_t user = 0;
  std::size_t item = 0;
  double rating = 0.0;  // on the [0, 1] scale
};

struct SyntheticData {
  SyntheticWorld world;
  std::vector<SyntheticEvent> events;  // grouped by user, in logging order
};

SyntheticData generate(const SynthConfig& cfg);

std::string user_label(std::size_t u);
std::string item_label(std::size_t i);
/// Inverse of the label helpers; throws DataError on foreign labels.
std::size_t parse_label(const std::string& label);

/// Event file readable by load_log() with the default column order and
/// rating scale [0, 1].
std::string event_file_text(const SyntheticData& data);
/// "item,category" lines for the environment's quit rule.
std::string category_file_text(const SyntheticWorld& world);

Checkpoint to_checkpoint(const SyntheticWorld& world, const SynthConfig& cfg);
SyntheticWorld world_from_checkpoint(const Checkpoint& ckpt);

/// Writes <dir>/events.csv, <dir>/categories.csv and <dir>/truth.ckpt.
void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data,
                     const SynthConfig& cfg);

/// Loads "item,category" lines and maps them onto the dense item indices of
/// `items`; unknown items are ignored, uncovered items raise DataError.
std::vector<int> load_categories(const std::filesystem::path& path, const IndexMap& items);

}  // namespace rewardlab
