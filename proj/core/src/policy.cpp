#include "rewardlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "rewardlab/errors.hpp"

namespace rewardlab {

std::vector<double> encode_state(const EnvState& state, const EmbeddingTable& embeddings,
                                 std::size_t window, std::size_t max_length) {
  const std::size_t d = embeddings.dim;
  std::vector<double> enc(2 * d + 1, 0.0);
  const auto eu = embeddings.user(state.user);
  std::copy(eu.begin(), eu.end(), enc.begin());

  const auto recent = state.recent_window(window);
  if (!recent.empty()) {
    double total = 0.0;
    for (const auto& h : recent) total += h.raw_reward;
    for (const auto& h : recent) {
      const double w = total > 0.0 ? h.raw_reward / total
                                   : 1.0 / static_cast<double>(recent.size());
      const auto ei = embeddings.item(h.item);
      for (std::size_t k = 0; k < d; ++k) enc[d + k] += w * ei[k];
    }
  }
  enc[2 * d] = max_length > 0 ? static_cast<double>(state.step) / max_length : 0.0;
  return enc;
}

std::vector<double> masked_softmax(std::span<const double> scores,
                                   std::span<const std::uint8_t> allowed) {
  if (!allowed.empty() && allowed.size() != scores.size()) {
    throw ShapeError("mask length does not match the number of scores");
  }
  const auto ok = [&](std::size_t j) { return allowed.empty() || allowed[j] != 0; };
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (ok(j)) top = std::max(top, scores[j]);
  }
  if (top == -std::numeric_limits<double>::infinity()) {
    throw ExhaustionError("every item is masked");
  }
  std::vector<double> p(scores.size(), 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (ok(j)) total += (p[j] = std::exp(scores[j] - top));
  }
  for (double& x : p) x /= total;
  return p;
}

std::vector<double> ActorCritic::scores(std::span<const double> encoding) const {
  const auto query = forward(actor, encoding);
  std::vector<double> s(items);
  for (std::size_t j = 0; j < items; ++j) {
    const double* e = item_vectors.data() + j * dim;
    s[j] = std::inner_product(query.begin(), query.end(), e, 0.0);
  }
  return s;
}

std::vector<double> ActorCritic::probabilities(std::span<const double> encoding,
                                               std::span<const std::uint8_t> allowed) const {
  return masked_softmax(scores(encoding), allowed);
}

double ActorCritic::value(std::span<const double> encoding) const {
  return forward(critic, encoding).front();
}

ActorCritic make_actor_critic(std::span<const double> item_vectors, std::size_t items,
                              std::size_t dim, const ActorCriticConfig& cfg,
                              std::size_t encoding_size) {
  if (item_vectors.size() != items * dim) {
    throw ShapeError("item vectors do not match items x dim");
  }
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(cfg.entropy_coef >= 0.0)) throw ConfigError("entropy coefficient must be >= 0");
  if (encoding_size == 0) encoding_size = 2 * dim + 1;
  ActorCritic m;
  m.actor = DenseNet({encoding_size, cfg.hidden, cfg.hidden, dim}, Activation::tanh,
                     derive_seed(cfg.seed, "actor"));
  m.critic = DenseNet({encoding_size, cfg.hidden, cfg.hidden, 1}, Activation::tanh,
                      derive_seed(cfg.seed, "critic"));
  m.item_vectors.assign(item_vectors.begin(), item_vectors.end());
  m.items = items;
  m.dim = dim;
  m.gamma = cfg.gamma;
  m.entropy_coef = cfg.entropy_coef;
  return m;
}

Action act(const ActorCritic& model, std::span<const double> encoding,
           std::span<const std::uint8_t> allowed, Rng& rng) {
  const auto p = model.probabilities(encoding, allowed);
  const double u = uniform01(rng);
  double cumulative = 0.0;
  std::size_t pick = p.size();
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;
    pick = j;  // last positive entry absorbs rounding at the top end
    cumulative += p[j];
    if (u < cumulative) break;
  }
  return {static_cast<ItemId>(pick), std::log(p[pick])};
}

A2COptimizers A2COptimizers::for_model(const ActorCritic& model, double actor_lr,
                                       double critic_lr) {
  return {AdamState::for_parameters(model.actor.parameter_count(), actor_lr),
          AdamState::for_parameters(model.critic.parameter_count(), critic_lr)};
}

double one_step_advantage(double reward, double value, double next_value, bool done,
                          double gamma) {
  return reward + (done ? 0.0 : gamma * next_value) - value;
}

A2CLosses a2c_update(ActorCritic& model, std::span<const Transition> batch,
                     A2COptimizers& optimizers) {
  if (batch.empty()) throw ContractError("A2C update needs a non-empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<double> actor_grad(model.actor.parameter_count(), 0.0);
  std::vector<double> critic_grad(model.critic.parameter_count(), 0.0);
  ForwardTrace actor_trace;
  ForwardTrace critic_trace;
  std::vector<double> dscores(model.items);
  std::vector<double> dquery(model.dim);
  A2CLosses losses;

  for (const auto& tr : batch) {
    if (tr.action >= model.items) throw IndexError("transition action outside the catalog");
    forward(model.critic, tr.encoding, critic_trace);
    const double v = critic_trace.output()[0];
    const double v_next = tr.done ? 0.0 : model.value(tr.next_encoding);
    const double adv = one_step_advantage(tr.reward, v, v_next, tr.done, model.gamma);
    losses.critic += adv * adv * inv_n;
    const double critic_up[] = {-2.0 * adv * inv_n};
    accumulate_gradients(model.critic, critic_trace, critic_up, critic_grad);

    forward(model.actor, tr.encoding, actor_trace);
    const auto query = actor_trace.output();
    std::vector<double> s(model.items);
    for (std::size_t j = 0; j < model.items; ++j) {
      const double* e = model.item_vectors.data() + j * model.dim;
      s[j] = std::inner_product(query.begin(), query.end(), e, 0.0);
    }
    const auto p = masked_softmax(s, tr.allowed);
    if (p[tr.action] == 0.0) throw ContractError("transition action was masked");
    double entropy = 0.0;
    for (double pj : p) {
      if (pj > 0.0) entropy -= pj * std::log(pj);
    }
    losses.actor += -adv * std::log(p[tr.action]) * inv_n;
    losses.entropy += entropy * inv_n;

    // d(-A log p_a - c H)/ds_j with the advantage held constant.
    for (std::size_t j = 0; j < model.items; ++j) {
      if (p[j] == 0.0) {
        dscores[j] = 0.0;
        continue;
      }
      const double onehot = j == tr.action ? 1.0 : 0.0;
      dscores[j] = (-adv * (onehot - p[j]) +
                    model.entropy_coef * p[j] * (std::log(p[j]) + entropy)) *
                   inv_n;
    }
    std::fill(dquery.begin(), dquery.end(), 0.0);
    for (std::size_t j = 0; j < model.items; ++j) {
      if (dscores[j] == 0.0) continue;
      const double* e = model.item_vectors.data() + j * model.dim;
      for (std::size_t k = 0; k < model.dim; ++k) dquery[k] += dscores[j] * e[k];
    }
    accumulate_gradients(model.actor, actor_trace, dquery, actor_grad);
  }
  losses.actor -= model.entropy_coef * losses.entropy;
  if (!std::isfinite(losses.actor) || !std::isfinite(losses.critic)) {
    throw DivergenceError("A2C loss became non-finite");
  }
  adam_step(model.actor.parameters(), actor_grad, optimizers.actor);
  adam_step(model.critic.parameters(), critic_grad, optimizers.critic);
  return losses;
}

ItemId ActorCriticPolicy::select(const EnvState& state, std::span<const std::uint8_t> allowed,
                                 Rng& rng) {
  const auto enc = encode_state(state, *embeddings_, config_->window, config_->max_length);
  return act(*model_, enc, allowed, rng).item;
}

std::vector<Transition> transitions_of(const Trajectory& traj, const Environment& env) {
  std::vector<Transition> out;
  out.reserve(traj.length());
  const auto& cfg = env.config;
  EnvState current = traj.state_before(0);
  auto enc = encode_state(current, *env.embeddings, cfg.window, cfg.max_length);
  for (std::size_t t = 0; t < traj.length(); ++t) {
    Transition tr;
    tr.allowed = action_mask(current, env);
    EnvState next = traj.state_before(t + 1);
    auto next_enc = encode_state(next, *env.embeddings, cfg.window, cfg.max_length);
    tr.encoding = std::move(enc);
    tr.action = traj.items[t];
    tr.reward = traj.shaped_rewards[t];
    tr.next_encoding = next_enc;
    tr.done = t + 1 == traj.length();
    out.push_back(std::move(tr));
    current = std::move(next);
    enc = std::move(next_enc);
  }
  return out;
}

PolicyTrainResult train_policy(ActorCritic model, const Environment& env,
                               const PolicyTrainConfig& cfg) {
  if (env.embeddings == nullptr || env.beliefs == nullptr || env.store == nullptr) {
    throw ContractError("policy training needs beliefs, a k-gram store and embeddings");
  }
  env.config.validate();
  env.penalty.validate();
  if (env.config.no_repeat && env.config.max_length > env.num_items()) {
    throw ConfigError("max_length exceeds the catalog size under no_repeat");
  }
  PolicyTrainResult result;
  A2COptimizers opt = A2COptimizers::for_model(model, cfg.lr, cfg.critic_lr);
  Rng user_rng = make_stream(derive_seed(cfg.seed, "train-users"));
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    const auto user = static_cast<UserId>(uniform_index(user_rng, 0, env.num_users() - 1));
    ActorCriticPolicy policy(model, *env.embeddings, env.config);
    const Trajectory traj = rollout(env, policy, user, derive_seed(cfg.seed, "train-episode", ep));
    if (cfg.on_episode) cfg.on_episode(ep, traj);
    const auto batch = transitions_of(traj, env);
    A2CLosses losses;
    try {
      losses = a2c_update(model, batch, opt);
    } catch (const DivergenceError& err) {
      throw DivergenceError("episode " + std::to_string(ep) + ": " + err.what());
    }
    result.curve.push_back({ep, traj.total_raw(), traj.length(), losses.actor, losses.critic});
  }
  result.model = std::move(model);
  return result;
}

std::string learning_curve_csv(std::span<const LearningCurvePoint> curve) {
  std::ostringstream out;
  out.precision(10);
  out << "episode,R_tra,Length,actor_loss,critic_loss\n";
  for (const auto& p : curve) {
    out << p.episode << ',' << p.r_tra << ',' << p.length << ',' << p.actor_loss << ','
        << p.critic_loss << '\n';
  }
  return out.str();
}

Checkpoint to_checkpoint(const ActorCritic& model) {
  Checkpoint ckpt;
  ckpt.header["actor"] = net_header(model.actor);
  ckpt.header["critic"] = net_header(model.critic);
  ckpt.header["items"] = model.items;
  ckpt.header["dim"] = model.dim;
  ckpt.header["gamma"] = model.gamma;
  ckpt.header["entropy_coef"] = model.entropy_coef;
  append_net(ckpt.blob, model.actor);
  append_net(ckpt.blob, model.critic);
  append_floats(ckpt.blob, model.item_vectors);
  return ckpt;
}

ActorCritic actor_critic_from_checkpoint(const Checkpoint& ckpt) {
  ActorCritic m;
  std::size_t cursor = 0;
  m.actor = net_from(ckpt.field("actor"), ckpt.blob, cursor);
  m.critic = net_from(ckpt.field("critic"), ckpt.blob, cursor);
  m.items = ckpt.field("items").get<std::size_t>();
  m.dim = ckpt.field("dim").get<std::size_t>();
  m.gamma = ckpt.field("gamma").get<double>();
  m.entropy_coef = ckpt.field("entropy_coef").get<double>();
  m.item_vectors = take_floats(ckpt.blob, cursor, m.items * m.dim);
  if (cursor != ckpt.blob.size()) throw FormatError("policy blob has trailing values");
  return m;
}

}  // namespace rewardlab
