#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rewardlab/dataset.hpp"
#include "rewardlab/rng.hpp"
#include "rewardlab/worldmodel.hpp"

namespace rewardlab {

/// Count-based estimate of the logging (behavior) policy. Contexts are
/// unordered: the key of a window is its sorted item tuple. Tables exist
/// for every order 0..k; order 0 holds marginal item popularity.
class KGramStore {
 public:
  using Context = std::vector<ItemId>;  // sorted
  using Counts = std::map<ItemId, std::uint64_t>;

  KGramStore() = default;
  KGramStore(std::size_t k, std::size_t item_count, double smoothing);

  /// Adds every sliding window of one user's chronologically ordered log.
  void add_sequence(std::span<const ItemId> items);

  std::size_t order() const noexcept { return k_; }
  std::size_t item_count() const noexcept { return item_count_; }
  double smoothing() const noexcept { return smoothing_; }

  /// nullptr when the context was never observed at that order.
  const Counts* find(std::size_t order, const Context& sorted_context) const;
  const std::map<Context, Counts>& table(std::size_t order) const { return tables_.at(order); }

  /// Sorted lines "order<TAB>items<TAB>item:count,...".
  std::string to_text() const;
  static KGramStore from_text(const std::string& text);

  friend bool operator==(const KGramStore&, const KGramStore&) = default;

 private:
  std::size_t k_ = 0;
  std::size_t item_count_ = 0;
  double smoothing_ = 0.0;
  std::vector<std::map<Context, Counts>> tables_;
};

/// Groups events by user (ordered by position) and feeds each log to the store.
KGramStore build_kgram_store(std::span<const InteractionEvent> events, std::size_t k,
                             std::size_t item_count, double smoothing);

/// Next-item distribution given a context listed oldest first. Uses at most
/// the last k items; on a miss, drops the oldest item and retries, ending at
/// order 0. Add-lambda smoothing over all items; an empty order-0 table
/// yields the uniform distribution.
std::vector<double> behavior_dist(const KGramStore& store, std::span<const ItemId> context);

/// -KL(dist || uniform) with natural logs; zero-probability terms vanish.
double entropy_penalty(std::span<const double> dist);

/// Entropy penalty on the contiguous window of the last min(k, i) items.
double window_entropy_penalty(const KGramStore& store, std::span<const ItemId> history,
                              std::size_t k);

/// Positions used by the interactive penalty: all of [0, i) when i <= k,
/// otherwise k distinct positions drawn by a partial Fisher-Yates shuffle,
/// returned in ascending order.
std::vector<std::size_t> sample_positions(std::size_t i, std::size_t k, Rng& rng);

/// Entropy penalty over k randomly sampled history positions.
double interactive_penalty(const KGramStore& store, std::span<const ItemId> history,
                           std::size_t k, Rng& rng);

/// alpha (exp(-xi l) + 1).
double decay_weight(double step, double alpha, double xi);

struct PenaltyConfig {
  std::size_t k = 3;
  double lambda1 = 0.05;
  double lambda2 = 0.1;
  double alpha = 0.5;
  double xi = 1.0;
  double smoothing = 0.01;
  // Forces the blend weight (1 disables P_I, 0 disables P_E).
  std::optional<double> omega_override;

  void validate() const;
  friend bool operator==(const PenaltyConfig&, const PenaltyConfig&) = default;
};

double blend_weight(std::size_t step, const PenaltyConfig& cfg);

/// r_D - lambda1 P_D + lambda2 [(1 - w(l)) P_I + w(l) P_E], unclipped.
double reallocate_reward(const RewardBelief& belief, double pe, double pi, std::size_t step,
                         const PenaltyConfig& cfg);

}  // namespace rewardlab
