#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rewardlab/dataset.hpp"
#include "rewardlab/penalties.hpp"
#include "rewardlab/rng.hpp"
#include "rewardlab/worldmodel.hpp"

namespace rewardlab {

enum class Termination { running, quit, max_length };

std::string to_string(Termination t);

struct HistoryEntry {
  ItemId item = 0;
  double raw_reward = 0.0;

  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct EnvState {
  UserId user = 0;
  std::vector<HistoryEntry> history;
  std::size_t step = 0;  // == history.size()
  Termination status = Termination::running;

  bool terminated() const noexcept { return status != Termination::running; }
  /// Last min(W, step) entries.
  std::span<const HistoryEntry> recent_window(std::size_t window) const;
  std::vector<ItemId> items() const;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct EnvConfig {
  std::size_t max_length = 30;
  std::size_t window = 4;
  std::size_t quit_threshold = 3;
  // Item -> category. When empty, similarity falls back to embedding cosine.
  std::vector<int> item_categories;
  double cosine_threshold = 0.9;
  bool no_repeat = true;

  void validate() const;
};

/// Immutable pieces an episode runs against. References must outlive it.
struct Environment {
  const BeliefTable* beliefs = nullptr;
  const KGramStore* store = nullptr;
  const EmbeddingTable* embeddings = nullptr;  // needed for cosine similarity
  PenaltyConfig penalty;
  EnvConfig config;

  std::size_t num_users() const { return beliefs->users(); }
  std::size_t num_items() const { return beliefs->items(); }
};

EnvState reset(UserId user, const Environment& env);

struct StepResult {
  EnvState next;
  double raw_reward = 0.0;
  double shaped_reward = 0.0;
  double entropy_penalty = 0.0;
  double interactive_penalty = 0.0;
  bool done = false;
};

/// True when >= quit_threshold items of the window are mutually similar
/// (same category, or cosine above the threshold to a common anchor item).
bool quit_triggered(std::span<const HistoryEntry> window, const Environment& env);

StepResult step(const Environment& env, const EnvState& state, ItemId action, Rng& rng);

/// 1 for items still recommendable in this episode.
std::vector<std::uint8_t> action_mask(const EnvState& state, const Environment& env);

class Policy {
 public:
  virtual ~Policy() = default;
  virtual ItemId select(const EnvState& state, std::span<const std::uint8_t> allowed,
                        Rng& rng) = 0;
};

/// Uniform over allowed items; the sanity baseline.
class RandomPolicy final : public Policy {
 public:
  ItemId select(const EnvState& state, std::span<const std::uint8_t> allowed,
                Rng& rng) override;
};

/// Replays a fixed item list (tests and scripted probes).
class ScriptedPolicy final : public Policy {
 public:
  explicit ScriptedPolicy(std::vector<ItemId> items) : items_(std::move(items)) {}
  ItemId select(const EnvState& state, std::span<const std::uint8_t> allowed,
                Rng& rng) override;

 private:
  std::vector<ItemId> items_;
};

struct Trajectory {
  UserId user = 0;
  std::vector<ItemId> items;
  std::vector<double> raw_rewards;
  std::vector<double> shaped_rewards;
  Termination cause = Termination::running;

  std::size_t length() const noexcept { return items.size(); }
  double total_raw() const;
  /// State before step `t` (t = length() gives the final state).
  EnvState state_before(std::size_t t) const;
  nlohmann::json to_json() const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Runs until termination. The policy draws from stream
/// derive_seed(seed, "policy") and the environment from derive_seed(seed, "env").
Trajectory rollout(const Environment& env, Policy& policy, UserId user, std::uint64_t seed);

}  // namespace rewardlab
