#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "rewardlab/errors.hpp"
#include "rewardlab/policy.hpp"
#include "support.hpp"

namespace rewardlab {
namespace {

EmbeddingTable table_2x3() {
  auto emb = EmbeddingTable::zeros(2, 3, 2);
  emb.user_vectors = {0.5, -0.5, 1.0, 2.0};
  emb.item_vectors = {1.0, 0.0, 0.0, 1.0, 3.0, 3.0};
  return emb;
}

TEST(Encoding, EmptyHistory) {
  const auto emb = table_2x3();
  EnvState s;
  s.user = 1;
  EXPECT_EQ(encode_state(s, emb, 4, 30), (std::vector<double>{1.0, 2.0, 0.0, 0.0, 0.0}));
}

TEST(Encoding, SingleItemIsItsEmbedding) {
  const auto emb = table_2x3();
  EnvState s;
  s.history = {{2, 1.0}};
  s.step = 1;
  const auto enc = encode_state(s, emb, 4, 30);
  EXPECT_EQ(enc, (std::vector<double>{0.5, -0.5, 3.0, 3.0, 1.0 / 30.0}));
}

TEST(Encoding, EqualRewardsAverage) {
  const auto emb = table_2x3();
  EnvState s;
  s.history = {{0, 1.0}, {1, 1.0}};
  s.step = 2;
  const auto enc = encode_state(s, emb, 4, 10);
  EXPECT_DOUBLE_EQ(enc[2], 0.5);
  EXPECT_DOUBLE_EQ(enc[3], 0.5);
  EXPECT_DOUBLE_EQ(enc[4], 0.2);
}

TEST(Encoding, RewardWeightsAndZeroRewardFallback) {
  const auto emb = table_2x3();
  EnvState s;
  s.history = {{0, 0.75}, {1, 0.25}};
  s.step = 2;
  auto enc = encode_state(s, emb, 4, 10);
  EXPECT_DOUBLE_EQ(enc[2], 0.75);
  EXPECT_DOUBLE_EQ(enc[3], 0.25);
  s.history = {{0, 0.0}, {1, 0.0}};
  enc = encode_state(s, emb, 4, 10);
  EXPECT_DOUBLE_EQ(enc[2], 0.5);
  // Only the last W items count.
  s.history = {{2, 1.0}, {0, 1.0}};
  enc = encode_state(s, emb, 1, 10);
  EXPECT_DOUBLE_EQ(enc[2], 1.0);
  EXPECT_DOUBLE_EQ(enc[3], 0.0);
}

TEST(Softmax, HandValues) {
  const auto uniform = masked_softmax(std::vector<double>(4, 0.3), {});
  for (double p : uniform) EXPECT_DOUBLE_EQ(p, 0.25);
  const auto two = masked_softmax(std::vector<double>{1.0, 0.0}, {});
  EXPECT_NEAR(two[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(two[0], 0.7311, 1e-4);
  EXPECT_NEAR(two[1], 0.2689, 1e-4);
  const std::vector<std::uint8_t> none{0, 0};
  EXPECT_THROW(masked_softmax(std::vector<double>{1.0, 0.0}, none), ExhaustionError);
}

TEST(Softmax, ShiftInvariance) {
  testing::for_all(200, 71, [](Rng& rng, std::size_t) {
    const std::size_t n = 1 + uniform_index(rng, 0, 20);
    auto scores = testing::random_vector(rng, n, 3.0);
    std::vector<std::uint8_t> allowed(n, 1);
    for (auto& m : allowed) m = uniform01(rng) < 0.7;
    allowed[uniform_index(rng, 0, n - 1)] = 1;
    const auto p = masked_softmax(scores, allowed);
    const double shift = 50.0 * standard_normal(rng);
    for (auto& s : scores) s += shift;
    const auto q = masked_softmax(scores, allowed);
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(p[j], q[j], 1e-12);
    EXPECT_EQ(std::max_element(p.begin(), p.end()) - p.begin(),
              std::max_element(q.begin(), q.end()) - q.begin());
  });
}

ActorCritic small_model(std::size_t items, std::size_t dim, std::uint64_t seed,
                        std::size_t encoding_size = 0) {
  Rng rng = make_stream(seed);
  const auto vectors = testing::random_vector(rng, items * dim);
  ActorCriticConfig cfg;
  cfg.hidden = 16;
  cfg.seed = seed;
  return make_actor_critic(vectors, items, dim, cfg, encoding_size);
}

TEST(Act, ForcedChoiceHasZeroLogProb) {
  const auto m = small_model(5, 3, 1);
  const std::vector<double> enc(7, 0.2);
  const std::vector<std::uint8_t> allowed{0, 0, 1, 0, 0};
  Rng rng = make_stream(0);
  const auto a = act(m, enc, allowed, rng);
  EXPECT_EQ(a.item, 2u);
  EXPECT_EQ(a.log_prob, 0.0);
  EXPECT_THROW(act(m, enc, std::vector<std::uint8_t>(5, 0), rng), ExhaustionError);
}

TEST(Act, LogProbMatchesProbabilities) {
  const auto m = small_model(6, 3, 2);
  const std::vector<double> enc{0.1, 0.2, -0.3, 0.4, 0.0, 0.5, 0.1};
  Rng rng = make_stream(3);
  const auto p = m.probabilities(enc, {});
  for (int k = 0; k < 20; ++k) {
    const auto a = act(m, enc, {}, rng);
    EXPECT_NEAR(a.log_prob, std::log(p[a.item]), 1e-12);
  }
}

TEST(Act, MaskedItemsAreNeverSampled) {
  const auto m = small_model(8, 3, 4);
  const std::vector<double> enc{0.1, 0.2, -0.3, 0.4, 0.0, 0.5, 0.1};
  const std::vector<std::uint8_t> allowed{1, 0, 1, 0, 1, 0, 1, 0};
  Rng rng = make_stream(5);
  for (int k = 0; k < 100000; ++k) {
    const auto a = act(m, enc, allowed, rng);
    ASSERT_EQ(allowed[a.item], 1) << "draw " << k;
  }
}

TEST(Advantage, HandArithmetic) {
  EXPECT_NEAR(one_step_advantage(1.0, 2.0, 2.0, false, 0.9), 0.8, 1e-15);
  EXPECT_EQ(one_step_advantage(1.0, 2.0, 5.0, true, 0.9), -1.0);
}

TEST(Update, ZeroAdvantageWithoutEntropyLeavesActorUnchanged) {
  auto m = small_model(4, 2, 6);
  m.entropy_coef = 0.0;
  m.critic = DenseNet::zeros(m.critic.layer_dims(), m.critic.activation());
  const DenseNet actor_before = m.actor;
  Transition tr;
  tr.encoding = {0.1, 0.2, 0.3, 0.4, 0.5};
  tr.next_encoding = tr.encoding;
  tr.action = 1;
  tr.reward = 0.0;
  tr.done = true;
  auto opt = A2COptimizers::for_model(m, 1e-2, 3e-2);
  const std::vector<Transition> batch{tr, tr};
  const auto losses = a2c_update(m, batch, opt);
  EXPECT_EQ(m.actor, actor_before);
  EXPECT_EQ(losses.critic, 0.0);
  EXPECT_THROW(a2c_update(m, std::span<const Transition>{}, opt), ContractError);
}

TEST(Update, NonFiniteRewardIsDivergence) {
  auto m = small_model(4, 2, 6);
  Transition tr;
  tr.encoding = {0.1, 0.2, 0.3, 0.4, 0.5};
  tr.next_encoding = tr.encoding;
  tr.reward = std::numeric_limits<double>::quiet_NaN();
  auto opt = A2COptimizers::for_model(m, 1e-2, 3e-2);
  const std::vector<Transition> batch{tr};
  EXPECT_THROW(a2c_update(m, batch, opt), DivergenceError);
}

TEST(Update, BanditGradientFavorsTheRewardedArm) {
  auto m = small_model(2, 2, 7, 3);
  const std::vector<double> enc{0.3, -0.2, 0.5};
  auto opt = A2COptimizers::for_model(m, 1e-2, 3e-2);
  Rng rng = make_stream(8);
  for (int u = 0; u < 200; ++u) {
    std::vector<Transition> batch;
    for (int b = 0; b < 8; ++b) {
      Transition tr;
      tr.encoding = enc;
      tr.next_encoding = enc;
      tr.action = act(m, enc, {}, rng).item;
      tr.reward = tr.action == 0 ? 1.0 : 0.0;
      tr.done = true;
      batch.push_back(tr);
    }
    a2c_update(m, batch, opt);
  }
  EXPECT_GT(m.probabilities(enc, {})[0], 0.9);
}

TEST(Update, CriticConvergesOnDeterministicChain) {
  auto m = small_model(1, 2, 9, 3);
  const std::vector<std::vector<double>> states{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  const double rewards[] = {0.5, 0.2, 1.0};
  std::vector<Transition> batch;
  for (std::size_t t = 0; t < 3; ++t) {
    Transition tr;
    tr.encoding = states[t];
    tr.next_encoding = t < 2 ? states[t + 1] : states[t];
    tr.action = 0;
    tr.reward = rewards[t];
    tr.done = t == 2;
    batch.push_back(tr);
  }
  auto opt = A2COptimizers::for_model(m, 1e-2, 3e-2);
  for (int u = 0; u < 3000; ++u) a2c_update(m, batch, opt);
  const double v2 = 1.0;
  const double v1 = 0.2 + 0.9 * v2;
  const double v0 = 0.5 + 0.9 * v1;
  EXPECT_NEAR(m.value(states[2]), v2, 0.05);
  EXPECT_NEAR(m.value(states[1]), v1, 0.05);
  EXPECT_NEAR(m.value(states[0]), v0, 0.05);
}

// Two users, 40 items in 5 categories, ground truth favoring low item ids.
struct World {
  BeliefTable beliefs{2, 40, 10, 0, 0};
  KGramStore store;
  EmbeddingTable embeddings = EmbeddingTable::zeros(2, 40, 4);
  Environment env;

  World() {
    Rng rng = make_stream(10);
    for (UserId u = 0; u < 2; ++u) {
      for (ItemId i = 0; i < 40; ++i) beliefs.at(u, i) = {1.0 - i / 40.0, 0.01, 10};
    }
    for (auto& v : embeddings.user_vectors) v = 0.3 * standard_normal(rng);
    for (auto& v : embeddings.item_vectors) v = 0.3 * standard_normal(rng);
    std::vector<InteractionEvent> events;
    for (std::uint32_t p = 0; p < 10; ++p) events.push_back({0, p, 0.0, 0.5, p});
    store = build_kgram_store(events, 3, 40, 0.01);
    env.beliefs = &beliefs;
    env.store = &store;
    env.embeddings = &embeddings;
    env.config.max_length = 10;
    env.config.item_categories.resize(40);
    for (ItemId i = 0; i < 40; ++i) env.config.item_categories[i] = static_cast<int>(i % 5);
  }
  World(const World&) = delete;
};

ActorCritic model_for(const World& w, std::uint64_t seed) {
  ActorCriticConfig cfg;
  cfg.hidden = 16;
  cfg.seed = seed;
  return make_actor_critic(w.embeddings.item_vectors, 40, 4, cfg);
}

TEST(Training, ZeroEpisodesReturnsTheInitialModel) {
  World w;
  const auto initial = model_for(w, 1);
  PolicyTrainConfig cfg;
  cfg.episodes = 0;
  const auto r = train_policy(initial, w.env, cfg);
  EXPECT_EQ(r.model, initial);
  EXPECT_TRUE(r.curve.empty());
}

TEST(Training, SameSeedSameCurve) {
  World w;
  PolicyTrainConfig cfg;
  cfg.episodes = 20;
  cfg.seed = 3;
  const auto a = train_policy(model_for(w, 1), w.env, cfg);
  const auto b = train_policy(model_for(w, 1), w.env, cfg);
  EXPECT_EQ(a.curve, b.curve);
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.curve.size(), 20u);
  EXPECT_NE(learning_curve_csv(a.curve).find("episode,R_tra,Length,actor_loss,critic_loss\n"),
            std::string::npos);
}

TEST(Training, DivergenceNamesTheEpisode) {
  World w;
  w.beliefs.at(0, 0).mean = std::numeric_limits<double>::quiet_NaN();
  for (ItemId i = 1; i < 40; ++i) w.beliefs.at(0, i).mean = std::numeric_limits<double>::quiet_NaN();
  PolicyTrainConfig cfg;
  cfg.episodes = 5;
  try {
    train_policy(model_for(w, 1), w.env, cfg);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("episode "), std::string::npos);
  }
}

TEST(Training, RejectsImpossibleEpisodeLength) {
  World w;
  w.env.config.max_length = 41;
  PolicyTrainConfig cfg;
  cfg.episodes = 1;
  EXPECT_THROW(train_policy(model_for(w, 1), w.env, cfg), ConfigError);
}

TEST(Transitions, MirrorTheTrajectory) {
  World w;
  RandomPolicy p;
  const auto traj = rollout(w.env, p, 1, 4);
  const auto batch = transitions_of(traj, w.env);
  ASSERT_EQ(batch.size(), traj.length());
  for (std::size_t t = 0; t < batch.size(); ++t) {
    EXPECT_EQ(batch[t].action, traj.items[t]);
    EXPECT_EQ(batch[t].reward, traj.shaped_rewards[t]);
    EXPECT_EQ(batch[t].done, t + 1 == batch.size());
    EXPECT_EQ(batch[t].allowed[traj.items[t]], 1);
    for (std::size_t j = 0; j < t; ++j) EXPECT_EQ(batch[t].allowed[traj.items[j]], 0);
    if (t + 1 < batch.size()) EXPECT_EQ(batch[t].next_encoding, batch[t + 1].encoding);
  }
}

TEST(Checkpoint, ActorCriticRoundTrip) {
  World w;
  const auto m = model_for(w, 2);
  const auto back = actor_critic_from_checkpoint(
      parse_checkpoint(serialize_checkpoint(to_checkpoint(m), "policy"), "policy"));
  EXPECT_EQ(back.items, 40u);
  EXPECT_EQ(back.dim, 4u);
  EXPECT_EQ(back.gamma, m.gamma);
  const auto enc = std::vector<double>(9, 0.1);
  EXPECT_NEAR(back.value(enc), m.value(enc), 1e-5);
}

TEST(Config, GammaMustBeBelowOne) {
  ActorCriticConfig cfg;
  cfg.gamma = 1.0;
  const std::vector<double> v(4, 0.0);
  EXPECT_THROW(make_actor_critic(v, 2, 2, cfg), ConfigError);
}

}  // namespace
}  // namespace rewardlab
