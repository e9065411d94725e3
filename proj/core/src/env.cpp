#include "rewardlab/env.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "rewardlab/errors.hpp"

namespace rewardlab {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::running: return "running";
    case Termination::quit: return "quit";
    case Termination::max_length: return "max_length";
  }
  return "unknown";
}

std::span<const HistoryEntry> EnvState::recent_window(std::size_t window) const {
  const std::size_t len = std::min(window, history.size());
  return std::span(history).subspan(history.size() - len);
}

std::vector<ItemId> EnvState::items() const {
  std::vector<ItemId> out;
  out.reserve(history.size());
  for (const auto& h : history) out.push_back(h.item);
  return out;
}

void EnvConfig::validate() const {
  if (!(1 <= quit_threshold && quit_threshold <= window && window <= max_length)) {
    throw ConfigError("environment requires 1 <= quit_threshold <= window <= max_length");
  }
  if (!(cosine_threshold > -1.0 && cosine_threshold <= 1.0)) {
    throw ConfigError("cosine threshold must lie in (-1, 1]");
  }
}

EnvState reset(UserId user, const Environment& env) {
  if (user >= env.num_users()) throw IndexError("user outside the environment");
  EnvState s;
  s.user = user;
  return s;
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (na * nb);
}

}  // namespace

bool quit_triggered(std::span<const HistoryEntry> window, const Environment& env) {
  const std::size_t threshold = env.config.quit_threshold;
  if (window.size() < threshold) return false;
  if (!env.config.item_categories.empty()) {
    std::map<int, std::size_t> counts;
    for (const auto& h : window) {
      if (h.item >= env.config.item_categories.size()) {
        throw IndexError("item has no category assignment");
      }
      if (++counts[env.config.item_categories[h.item]] >= threshold) return true;
    }
    return false;
  }
  if (env.embeddings == nullptr) {
    throw ContractError("cosine quit rule needs item embeddings");
  }
  for (const auto& anchor : window) {
    std::size_t similar = 0;
    for (const auto& other : window) {
      if (other.item == anchor.item ||
          cosine(env.embeddings->item(anchor.item), env.embeddings->item(other.item)) >
              env.config.cosine_threshold) {
        ++similar;
      }
    }
    if (similar >= threshold) return true;
  }
  return false;
}

std::vector<std::uint8_t> action_mask(const EnvState& state, const Environment& env) {
  std::vector<std::uint8_t> allowed(env.num_items(), 1);
  if (env.config.no_repeat) {
    for (const auto& h : state.history) allowed[h.item] = 0;
  }
  return allowed;
}

StepResult step(const Environment& env, const EnvState& state, ItemId action, Rng& rng) {
  if (state.terminated()) throw ContractError("cannot step a terminated episode");
  if (action >= env.num_items()) throw IndexError("action outside the catalog");
  if (env.config.no_repeat &&
      std::any_of(state.history.begin(), state.history.end(),
                  [&](const HistoryEntry& h) { return h.item == action; })) {
    throw ContractError("item " + std::to_string(action) +
                        " was already recommended this episode");
  }

  const RewardBelief& belief = env.beliefs->at(state.user, action);
  StepResult r;
  r.next = state;
  r.next.history.push_back({action, belief.mean});
  r.next.step = r.next.history.size();
  r.raw_reward = belief.mean;

  const auto items = r.next.items();
  const std::size_t k = env.penalty.k;
  r.entropy_penalty = window_entropy_penalty(*env.store, items, k);
  r.interactive_penalty = interactive_penalty(*env.store, items, k, rng);
  r.shaped_reward = reallocate_reward(belief, r.entropy_penalty, r.interactive_penalty,
                                      state.step, env.penalty);

  if (r.next.step >= env.config.max_length) {
    r.next.status = Termination::max_length;
  } else if (quit_triggered(r.next.recent_window(env.config.window), env)) {
    r.next.status = Termination::quit;
  }
  r.done = r.next.terminated();
  return r;
}

ItemId RandomPolicy::select(const EnvState&, std::span<const std::uint8_t> allowed, Rng& rng) {
  const auto n = static_cast<std::size_t>(std::count(allowed.begin(), allowed.end(), 1));
  if (n == 0) throw ExhaustionError("every item is masked");
  std::size_t pick = uniform_index(rng, 0, n - 1);
  for (std::size_t i = 0; i < allowed.size(); ++i) {
    if (allowed[i] && pick-- == 0) return static_cast<ItemId>(i);
  }
  throw ExhaustionError("every item is masked");
}

ItemId ScriptedPolicy::select(const EnvState& state, std::span<const std::uint8_t>, Rng&) {
  if (state.step >= items_.size()) throw ExhaustionError("script exhausted");
  return items_[state.step];
}

double Trajectory::total_raw() const {
  return std::accumulate(raw_rewards.begin(), raw_rewards.end(), 0.0);
}

EnvState Trajectory::state_before(std::size_t t) const {
  if (t > length()) throw IndexError("trajectory step out of range");
  EnvState s;
  s.user = user;
  for (std::size_t j = 0; j < t; ++j) s.history.push_back({items[j], raw_rewards[j]});
  s.step = t;
  if (t == length()) s.status = cause;
  return s;
}

nlohmann::json Trajectory::to_json() const {
  return {{"user", user},
          {"items", items},
          {"raw_rewards", raw_rewards},
          {"shaped_rewards", shaped_rewards},
          {"cause", to_string(cause)}};
}

Trajectory rollout(const Environment& env, Policy& policy, UserId user, std::uint64_t seed) {
  Rng env_rng = make_stream(derive_seed(seed, "env"));
  Rng policy_rng = make_stream(derive_seed(seed, "policy"));
  Trajectory traj;
  traj.user = user;
  EnvState state = reset(user, env);
  while (!state.terminated()) {
    const auto allowed = action_mask(state, env);
    const ItemId action = policy.select(state, allowed, policy_rng);
    StepResult r = step(env, state, action, env_rng);
    traj.items.push_back(action);
    traj.raw_rewards.push_back(r.raw_reward);
    traj.shaped_rewards.push_back(r.shaped_reward);
    state = std::move(r.next);
  }
  traj.cause = state.status;
  return traj;
}

}  // namespace rewardlab
