#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rewardlab/checkpoint.hpp"
#include "rewardlab/dataset.hpp"
#include "rewardlab/diffusion.hpp"
#include "rewardlab/rng.hpp"

namespace rewardlab {

/// Reward mean and uncertainty for one (user, item) pair.
struct RewardBelief {
  double mean = 0.0;      // average of raw samples, clipped to [0, 1]
  double variance = 0.0;  // population variance of raw samples
  std::size_t sample_count = 1;

  friend bool operator==(const RewardBelief&, const RewardBelief&) = default;
};

/// Mean (clipped after averaging) and divide-by-M variance of raw samples.
RewardBelief summarize_samples(std::span<const double> raw_samples);

/// Draws one raw reward sample from a stream.
using RewardSampler = std::function<double(Rng&)>;

RewardBelief predict_belief(const RewardSampler& sampler, std::size_t samples, Rng& rng);

RewardBelief predict_belief(const DiffusionModel& model, const EmbeddingTable& embeddings,
                            UserId user, ItemId item, std::size_t samples, Rng& rng);

/// Complete users x items grid of beliefs.
class BeliefTable {
 public:
  BeliefTable() = default;
  BeliefTable(std::size_t users, std::size_t items, std::size_t samples, std::uint64_t seed,
              std::uint64_t model_fingerprint);

  std::size_t users() const noexcept { return users_; }
  std::size_t items() const noexcept { return items_; }
  std::size_t samples() const noexcept { return samples_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t model_fingerprint() const noexcept { return model_fingerprint_; }

  const RewardBelief& at(UserId u, ItemId i) const;
  RewardBelief& at(UserId u, ItemId i);

  friend bool operator==(const BeliefTable&, const BeliefTable&) = default;

 private:
  std::size_t users_ = 0;
  std::size_t items_ = 0;
  std::size_t samples_ = 1;
  std::uint64_t seed_ = 0;
  std::uint64_t model_fingerprint_ = 0;
  std::vector<RewardBelief> beliefs_;
};

/// Seed of the stream owned by pair (user, item).
inline std::uint64_t pair_stream_seed(std::uint64_t seed, UserId user, ItemId item) {
  return derive_seed(seed, user, item);
}

struct BeliefBuildOptions {
  std::size_t samples = 10;
  std::uint64_t seed = 0;
  // 0 selects std::thread::hardware_concurrency().
  std::size_t threads = 0;
};

/// Each pair samples from its own derived stream, so the table does not
/// depend on iteration order or thread count.
BeliefTable build_belief_table(const DiffusionModel& model, const EmbeddingTable& embeddings,
                               const BeliefBuildOptions& options);

/// Matrix-factorization point predictor as a degenerate belief table
/// (clipped mean, zero variance, one "sample").
BeliefTable build_point_belief_table(const EmbeddingTable& embeddings,
                                     std::uint64_t model_fingerprint);

Checkpoint to_checkpoint(const BeliefTable& table);
BeliefTable beliefs_from_checkpoint(const Checkpoint& ckpt);

}  // namespace rewardlab
