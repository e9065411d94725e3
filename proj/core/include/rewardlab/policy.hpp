#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rewardlab/checkpoint.hpp"
#include "rewardlab/dataset.hpp"
#include "rewardlab/env.hpp"
#include "rewardlab/tensorcore.hpp"

namespace rewardlab {

/// user embedding (+) reward-weighted mean of the last W item embeddings
/// (+) step / max_length. Length 2d + 1.
std::vector<double> encode_state(const EnvState& state, const EmbeddingTable& embeddings,
                                 std::size_t window, std::size_t max_length);

/// Softmax restricted to allowed entries; masked entries get exactly 0.
std::vector<double> masked_softmax(std::span<const double> scores,
                                   std::span<const std::uint8_t> allowed);

struct ActorCriticConfig {
  std::size_t hidden = 64;
  double gamma = 0.9;
  double entropy_coef = 0.01;
  double lr = 1e-2;
  double critic_lr = 3e-2;
  std::uint64_t seed = 0;
};

/// The actor maps a state encoding to a d-dim query; items are scored by
/// dot product with their embeddings. The critic maps the encoding to V(s).
struct ActorCritic {
  DenseNet actor;
  DenseNet critic;
  std::vector<double> item_vectors;  // items x dim
  std::size_t items = 0;
  std::size_t dim = 0;
  double gamma = 0.9;
  double entropy_coef = 0.01;

  std::size_t encoding_size() const { return actor.input_size(); }
  std::vector<double> scores(std::span<const double> encoding) const;
  std::vector<double> probabilities(std::span<const double> encoding,
                                    std::span<const std::uint8_t> allowed) const;
  double value(std::span<const double> encoding) const;

  friend bool operator==(const ActorCritic&, const ActorCritic&) = default;
};

/// Encoding size defaults to 2 * dim + 1.
ActorCritic make_actor_critic(std::span<const double> item_vectors, std::size_t items,
                              std::size_t dim, const ActorCriticConfig& cfg,
                              std::size_t encoding_size = 0);

struct Action {
  ItemId item = 0;
  double log_prob = 0.0;
};

Action act(const ActorCritic& model, std::span<const double> encoding,
           std::span<const std::uint8_t> allowed, Rng& rng);

struct Transition {
  std::vector<double> encoding;
  ItemId action = 0;
  double reward = 0.0;
  std::vector<double> next_encoding;
  bool done = false;
  std::vector<std::uint8_t> allowed;  // empty means every item allowed
};

struct A2COptimizers {
  AdamState actor;
  AdamState critic;

  static A2COptimizers for_model(const ActorCritic& model, double actor_lr, double critic_lr);
};

struct A2CLosses {
  double actor = 0.0;
  double critic = 0.0;
  double entropy = 0.0;
};

/// One-step advantage r + gamma V(s') (1 - done) - V(s).
double one_step_advantage(double reward, double value, double next_value, bool done,
                          double gamma);

/// One Adam step on both networks from a batch of transitions.
A2CLosses a2c_update(ActorCritic& model, std::span<const Transition> batch,
                     A2COptimizers& optimizers);

/// Samples from the actor; encodes states on the fly.
class ActorCriticPolicy final : public Policy {
 public:
  ActorCriticPolicy(const ActorCritic& model, const EmbeddingTable& embeddings,
                    const EnvConfig& config)
      : model_(&model), embeddings_(&embeddings), config_(&config) {}
  ItemId select(const EnvState& state, std::span<const std::uint8_t> allowed,
                Rng& rng) override;

 private:
  const ActorCritic* model_;
  const EmbeddingTable* embeddings_;
  const EnvConfig* config_;
};

struct LearningCurvePoint {
  std::size_t episode = 0;
  double r_tra = 0.0;
  std::size_t length = 0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;

  friend bool operator==(const LearningCurvePoint&, const LearningCurvePoint&) = default;
};

struct PolicyTrainConfig {
  std::size_t episodes = 2000;
  double lr = 1e-2;
  double critic_lr = 3e-2;
  std::uint64_t seed = 0;
  std::function<void(std::size_t episode, const Trajectory&)> on_episode;
};

struct PolicyTrainResult {
  ActorCritic model;
  std::vector<LearningCurvePoint> curve;
};

/// Builds the A2C transitions of a finished trajectory.
std::vector<Transition> transitions_of(const Trajectory& traj, const Environment& env);

PolicyTrainResult train_policy(ActorCritic model, const Environment& env,
                               const PolicyTrainConfig& cfg);

std::string learning_curve_csv(std::span<const LearningCurvePoint> curve);

Checkpoint to_checkpoint(const ActorCritic& model);
ActorCritic actor_critic_from_checkpoint(const Checkpoint& ckpt);

}  // namespace rewardlab
