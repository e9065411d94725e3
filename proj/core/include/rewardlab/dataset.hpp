#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rewardlab/checkpoint.hpp"

namespace rewardlab {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

struct InteractionEvent {
  UserId user = 0;
  ItemId item = 0;
  double raw_rating = 0.0;
  double reward = 0.0;  // normalized to [0, 1]
  std::uint32_t position = 0;  // order within the user's log

  friend bool operator==(const InteractionEvent&, const InteractionEvent&) = default;
};

/// Column layout of a delimiter-separated interaction file. Column indices
/// are zero-based; a negative timestamp column means file order is used.
struct ColumnSchema {
  char delimiter = ',';
  int user_col = 0;
  int item_col = 1;
  int rating_col = 2;
  int timestamp_col = -1;
  double rating_min = 1.0;
  double rating_max = 5.0;
  bool has_header = false;
};

/// Dense re-indexing of raw identifiers, assigned in order of first
/// appearance. Bijective by construction.
class IndexMap {
 public:
  std::uint32_t intern(const std::string& raw);
  std::optional<std::uint32_t> find(const std::string& raw) const;
  const std::string& raw(std::uint32_t dense) const { return raw_.at(dense); }
  std::size_t size() const noexcept { return raw_.size(); }
  const std::vector<std::string>& raw_ids() const noexcept { return raw_; }

 private:
  std::vector<std::string> raw_;
  std::unordered_map<std::string, std::uint32_t> dense_;
};

struct InteractionLog {
  std::vector<InteractionEvent> events;  // sorted by (user, position)
  IndexMap users;
  IndexMap items;
  double rating_min = 0.0;
  double rating_max = 1.0;

  std::size_t num_users() const noexcept { return users.size(); }
  std::size_t num_items() const noexcept { return items.size(); }
};

double normalize_rating(double raw, double rating_min, double rating_max);
double denormalize_reward(double reward, double rating_min, double rating_max);

InteractionLog parse_log(std::istream& in, const ColumnSchema& schema);
InteractionLog load_log(const std::filesystem::path& path,
                        const ColumnSchema& schema);

/// Writes the normalized log as "user,item,raw_rating,reward,position" with
/// the original identifiers.
void write_normalized_log(const std::filesystem::path& path,
                          const InteractionLog& log);

struct DatasetSplit {
  std::vector<InteractionEvent> train;
  std::vector<InteractionEvent> test;
  double split_fraction = 0.8;
  std::uint64_t seed = 0;
};

/// Per-user shuffled split. The global train count is round(fraction * n);
/// per-user quotas use the largest-remainder rule so the total is exact.
DatasetSplit split_dataset(std::span<const InteractionEvent> events,
                           double fraction, std::uint64_t seed);

/// Biased matrix-factorization embeddings used as the diffusion condition.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::size_t users = 0;
  std::size_t items = 0;
  std::vector<double> user_vectors;  // users x dim, row-major
  std::vector<double> item_vectors;  // items x dim, row-major
  std::vector<double> user_bias;
  std::vector<double> item_bias;
  double global_mean = 0.0;

  static EmbeddingTable zeros(std::size_t users, std::size_t items,
                              std::size_t dim);

  std::span<const double> user(UserId u) const {
    return {user_vectors.data() + u * dim, dim};
  }
  std::span<const double> item(ItemId i) const {
    return {item_vectors.data() + i * dim, dim};
  }
  double predict(UserId u, ItemId i) const;

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

struct EmbeddingConfig {
  std::size_t dim = 32;
  std::size_t epochs = 50;
  double lr = 0.01;
  double reg = 0.01;
  double init_std = 0.1;  // N(0, init_std) initial vectors
  std::uint64_t seed = 0;
};

struct EmbeddingTrainResult {
  EmbeddingTable table;
  std::vector<double> epoch_rmse;  // training RMSE after each epoch

  double train_rmse() const { return epoch_rmse.empty() ? 0.0 : epoch_rmse.back(); }
};

EmbeddingTrainResult train_embeddings(std::span<const InteractionEvent> train,
                                      std::size_t num_users, std::size_t num_items,
                                      const EmbeddingConfig& cfg);

double rmse(const EmbeddingTable& table, std::span<const InteractionEvent> events);

Checkpoint to_checkpoint(const EmbeddingTable& table, const EmbeddingConfig& cfg);
EmbeddingTable embeddings_from_checkpoint(const Checkpoint& ckpt);

}  // namespace rewardlab
