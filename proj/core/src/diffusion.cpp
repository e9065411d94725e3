#include "rewardlab/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rewardlab/errors.hpp"

namespace rewardlab {

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ConfigError("noise schedule needs at least one step");
  NoiseSchedule s;
  s.beta_ = std::move(betas);
  double running = 1.0;
  for (double b : s.beta_) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("every beta must lie in (0, 1)");
    s.alpha_.push_back(1.0 - b);
    running *= 1.0 - b;
    s.alpha_bar_.push_back(running);
  }
  return s;
}

double NoiseSchedule::posterior_variance(int t) const {
  return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw ConfigError("diffusion needs T >= 2 steps");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("beta range must satisfy 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    betas[static_cast<std::size_t>(k)] =
        beta_start + (beta_end - beta_start) * k / static_cast<double>(steps - 1);
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

double q_sample(double x0, int t, double eps, const NoiseSchedule& schedule) {
  if (t < 0 || t > schedule.steps()) {
    throw IndexError("diffusion step " + std::to_string(t) + " outside [0, " +
                     std::to_string(schedule.steps()) + "]");
  }
  const double abar = schedule.alpha_bar(t);
  return std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
}

void time_embedding(int t, int steps, std::span<double> out) {
  const std::size_t half = out.size() / 2;
  for (std::size_t j = 0; j < half; ++j) {
    const double exponent = half > 1 ? static_cast<double>(j) / static_cast<double>(half - 1) : 0.0;
    const double freq = std::pow(static_cast<double>(steps), -exponent);
    out[j] = std::sin(t * freq);
    out[half + j] = std::cos(t * freq);
  }
  if (out.size() % 2 == 1) out.back() = static_cast<double>(t) / steps;
}

std::vector<double> time_embedding(int t, std::size_t dim, int steps) {
  std::vector<double> out(dim);
  time_embedding(t, steps, out);
  return out;
}

double DiffusionModel::predict_eps(double x_t, std::span<const double> condition,
                                   int t) const {
  if (condition.size() != condition_dim) {
    throw ShapeError("condition has length " + std::to_string(condition.size()) +
                     ", model expects " + std::to_string(condition_dim));
  }
  std::vector<double> input(1 + condition_dim + time_embed_dim);
  input[0] = x_t;
  std::copy(condition.begin(), condition.end(), input.begin() + 1);
  time_embedding(t, schedule.steps(),
                 std::span(input).subspan(1 + condition_dim, time_embed_dim));
  return forward(net, input).front();
}

DiffusionModel make_diffusion_model(std::size_t condition_dim, const DiffusionConfig& cfg) {
  if (cfg.time_embed_dim == 0 || cfg.hidden == 0) {
    throw ConfigError("time embedding and hidden sizes must be positive");
  }
  DiffusionModel m;
  m.schedule = build_schedule(cfg.steps, cfg.beta_start, cfg.beta_end);
  m.condition_dim = condition_dim;
  m.time_embed_dim = cfg.time_embed_dim;
  m.net = DenseNet({DiffusionModel::reward_dim + condition_dim + cfg.time_embed_dim,
                    cfg.hidden, cfg.hidden, DiffusionModel::reward_dim},
                   Activation::tanh, derive_seed(cfg.seed, "diffusion-net"));
  return m;
}

std::vector<double> condition_for(const EmbeddingTable& emb, UserId u, ItemId i) {
  std::vector<double> c;
  c.reserve(2 * emb.dim);
  const auto eu = emb.user(u);
  const auto ei = emb.item(i);
  c.insert(c.end(), eu.begin(), eu.end());
  c.insert(c.end(), ei.begin(), ei.end());
  return c;
}

namespace {

void fill_input(std::vector<double>& input, double x_t, const EmbeddingTable& emb,
                const InteractionEvent& e, int t, const DiffusionModel& model) {
  input[0] = x_t;
  const auto eu = emb.user(e.user);
  const auto ei = emb.item(e.item);
  std::copy(eu.begin(), eu.end(), input.begin() + 1);
  std::copy(ei.begin(), ei.end(), input.begin() + 1 + static_cast<std::ptrdiff_t>(emb.dim));
  time_embedding(t, model.schedule.steps(),
                 std::span(input).subspan(1 + model.condition_dim, model.time_embed_dim));
}

int draw_step(Rng& rng, int steps, bool include_t1) {
  const int lo = include_t1 ? 1 : 2;
  return static_cast<int>(uniform_index(rng, static_cast<std::size_t>(lo),
                                        static_cast<std::size_t>(steps)));
}

void check_condition(const DiffusionModel& model, const EmbeddingTable& emb) {
  if (model.condition_dim != 2 * emb.dim) {
    throw ShapeError("diffusion condition size does not equal twice the embedding dimension");
  }
  if (model.net.input_size() != 1 + model.condition_dim + model.time_embed_dim) {
    throw ShapeError("diffusion network input layer does not match its condition");
  }
}

}  // namespace

DiffusionTrainResult train_diffusion(std::span<const InteractionEvent> train,
                                     const EmbeddingTable& embeddings, DiffusionModel model,
                                     const DiffusionConfig& cfg) {
  if (train.empty()) throw EmptyDatasetError("cannot train diffusion on an empty split");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  check_condition(model, embeddings);
  for (const auto& e : train) {
    if (e.user >= embeddings.users || e.item >= embeddings.items) {
      throw IndexError("embeddings do not cover every training event");
    }
  }
  if (!cfg.include_t1 && model.schedule.steps() < 2) {
    throw ConfigError("excluding t = 1 requires at least two steps");
  }

  DiffusionTrainResult result;
  AdamState adam = AdamState::for_parameters(model.net.parameter_count(), cfg.lr);
  Rng rng = make_stream(derive_seed(cfg.seed, "diffusion-train"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> input(model.net.input_size());
  std::vector<double> grad(model.net.parameter_count());
  ForwardTrace trace;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sse = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const auto& e = train[order[k]];
        const int t = draw_step(rng, model.schedule.steps(), cfg.include_t1);
        const double eps = standard_normal(rng);
        fill_input(input, q_sample(e.reward, t, eps, model.schedule), embeddings, e, t,
                   model);
        forward(model.net, input, trace);
        const double diff = trace.output()[0] - eps;
        epoch_sse += diff * diff;
        const double upstream[] = {2.0 * diff * inv_batch};
        accumulate_gradients(model.net, trace, upstream, grad);
      }
      adam_step(model.net.parameters(), grad, adam);
    }
    const double loss = epoch_sse / static_cast<double>(train.size());
    if (!std::isfinite(loss)) {
      throw DivergenceError("diffusion training loss became non-finite at epoch " +
                            std::to_string(epoch));
    }
    result.epoch_loss.push_back(loss);
  }
  result.model = std::move(model);
  return result;
}

double diffusion_loss(const DiffusionModel& model, std::span<const InteractionEvent> events,
                      const EmbeddingTable& embeddings, std::size_t samples, Rng& rng,
                      bool include_t1) {
  if (events.empty() || samples == 0) throw ContractError("loss estimate needs samples");
  check_condition(model, embeddings);
  std::vector<double> input(model.net.input_size());
  ForwardTrace trace;
  double sse = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto& e = events[uniform_index(rng, 0, events.size() - 1)];
    const int t = draw_step(rng, model.schedule.steps(), include_t1);
    const double eps = standard_normal(rng);
    fill_input(input, q_sample(e.reward, t, eps, model.schedule), embeddings, e, t, model);
    forward(model.net, input, trace);
    const double diff = trace.output()[0] - eps;
    sse += diff * diff;
  }
  return sse / static_cast<double>(samples);
}

namespace {

ReverseSample finish(double x) {
  ReverseSample s;
  s.raw = std::clamp(x, -0.5, 1.5);
  s.reported = std::clamp(s.raw, 0.0, 1.0);
  return s;
}

}  // namespace

ReverseSample denoise_from(const NoiseSchedule& schedule, const EpsPredictor& eps_hat,
                           double x_T, Rng& rng) {
  double x = x_T;
  for (int t = schedule.steps(); t >= 1; --t) {
    const double eps = eps_hat(x, t);
    const double mean = (x - schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t)) * eps) /
                        std::sqrt(schedule.alpha(t));
    if (t > 1) {
      x = mean + std::sqrt(schedule.posterior_variance(t)) * standard_normal(rng);
    } else {
      x = mean;
    }
  }
  return finish(x);
}

ReverseSample reverse_sample(const DiffusionModel& model, std::span<const double> condition,
                             Rng& rng) {
  if (condition.size() != model.condition_dim) {
    throw ShapeError("condition has length " + std::to_string(condition.size()) +
                     ", model expects " + std::to_string(model.condition_dim));
  }
  const double x_T = standard_normal(rng);
  return denoise_from(
      model.schedule,
      [&](double x_t, int t) { return model.predict_eps(x_t, condition, t); }, x_T, rng);
}

ConditionedSampler::ConditionedSampler(const DiffusionModel& model,
                                       std::span<const double> condition)
    : model_(&model) {
  if (condition.size() != model.condition_dim) {
    throw ShapeError("condition has length " + std::to_string(condition.size()) +
                     ", model expects " + std::to_string(model.condition_dim));
  }
  const DenseNet& net = model.net;
  const std::size_t in = net.input_size();
  const std::size_t hidden = net.layer_dims()[1];
  const auto w = net.weights(0);
  const auto b = net.bias(0);
  base_.assign(b.begin(), b.end());
  for (std::size_t o = 0; o < hidden; ++o) {
    const double* row = w.data() + o * in;
    for (std::size_t k = 0; k < condition.size(); ++k) base_[o] += row[1 + k] * condition[k];
  }
  const int steps = model.schedule.steps();
  const std::size_t tau_offset = 1 + model.condition_dim;
  std::vector<double> tau(model.time_embed_dim);
  time_terms_.assign(static_cast<std::size_t>(steps) * hidden, 0.0);
  for (int t = 1; t <= steps; ++t) {
    time_embedding(t, steps, tau);
    double* dst = time_terms_.data() + static_cast<std::size_t>(t - 1) * hidden;
    for (std::size_t o = 0; o < hidden; ++o) {
      const double* row = w.data() + o * in + tau_offset;
      for (std::size_t k = 0; k < tau.size(); ++k) dst[o] += row[k] * tau[k];
    }
  }
  // Later layers stored input-major so the inner loop runs over outputs.
  transposed_.resize(net.num_layers());
  for (std::size_t l = 1; l < net.num_layers(); ++l) {
    const std::size_t lin = net.layer_dims()[l];
    const std::size_t lout = net.layer_dims()[l + 1];
    const auto wl = net.weights(l);
    auto& wt = transposed_[l];
    wt.resize(lin * lout);
    for (std::size_t o = 0; o < lout; ++o) {
      for (std::size_t k = 0; k < lin; ++k) wt[k * lout + o] = wl[o * lin + k];
    }
  }
}

double ConditionedSampler::predict_eps(double x_t, int t) const {
  const DenseNet& net = model_->net;
  const auto& dims = net.layer_dims();
  const std::size_t in = dims[0];
  const std::size_t hidden = dims[1];
  const auto w0 = net.weights(0);
  const double* tt = time_terms_.data() + static_cast<std::size_t>(t - 1) * hidden;
  h1_.resize(hidden);
  for (std::size_t o = 0; o < hidden; ++o) {
    const double z = base_[o] + tt[o] + w0[o * in] * x_t;
    h1_[o] = net.num_layers() == 1 ? z : std::tanh(z);
  }
  if (net.num_layers() == 1) return h1_[0];
  for (std::size_t l = 1; l < net.num_layers(); ++l) {
    const std::size_t lin = dims[l];
    const std::size_t lout = dims[l + 1];
    const double* wt = transposed_[l].data();
    const auto b = net.bias(l);
    h2_.assign(b.begin(), b.end());
    double* z = h2_.data();
    for (std::size_t k = 0; k < lin; ++k) {
      const double hk = h1_[k];
      const double* col = wt + k * lout;
      for (std::size_t o = 0; o < lout; ++o) z[o] += col[o] * hk;
    }
    if (l + 1 < net.num_layers()) {
      for (std::size_t o = 0; o < lout; ++o) {
        z[o] = net.activation() == Activation::tanh ? std::tanh(z[o]) : std::max(z[o], 0.0);
      }
    }
    h1_.swap(h2_);
  }
  return h1_[0];
}

ReverseSample ConditionedSampler::sample(Rng& rng) const {
  const double x_T = standard_normal(rng);
  return denoise_from(
      model_->schedule, [this](double x_t, int t) { return predict_eps(x_t, t); }, x_T,
      rng);
}

namespace {

Checkpoint model_checkpoint(const DiffusionModel& model) {
  Checkpoint ckpt;
  ckpt.header["net"] = net_header(model.net);
  ckpt.header["condition_dim"] = model.condition_dim;
  ckpt.header["time_embed_dim"] = model.time_embed_dim;
  ckpt.header["reward_dim"] = DiffusionModel::reward_dim;
  ckpt.header["schedule"] = {{"T", model.schedule.steps()}};
  append_net(ckpt.blob, model.net);
  // The full schedule travels with the model so sampling never recomputes it.
  append_floats(ckpt.blob, model.schedule.betas());
  return ckpt;
}

}  // namespace

Checkpoint to_checkpoint(const DiffusionModel& model, const DiffusionConfig& cfg) {
  Checkpoint ckpt = model_checkpoint(model);
  ckpt.header["seed"] = cfg.seed;
  ckpt.header["hyperparameters"] = {{"beta_start", cfg.beta_start},
                                    {"beta_end", cfg.beta_end},
                                    {"hidden", cfg.hidden},
                                    {"epochs", cfg.epochs},
                                    {"batch_size", cfg.batch_size},
                                    {"lr", cfg.lr},
                                    {"include_t1", cfg.include_t1}};
  return ckpt;
}

DiffusionModel diffusion_from_checkpoint(const Checkpoint& ckpt) {
  DiffusionModel m;
  std::size_t cursor = 0;
  m.net = net_from(ckpt.field("net"), ckpt.blob, cursor);
  m.condition_dim = ckpt.field("condition_dim").get<std::size_t>();
  m.time_embed_dim = ckpt.field("time_embed_dim").get<std::size_t>();
  const int steps = ckpt.field("schedule").at("T").get<int>();
  auto betas = take_floats(ckpt.blob, cursor, static_cast<std::size_t>(steps));
  m.schedule = NoiseSchedule::from_betas(std::move(betas));
  if (cursor != ckpt.blob.size()) throw FormatError("diffusion blob has trailing values");
  if (m.net.input_size() != 1 + m.condition_dim + m.time_embed_dim) {
    throw FormatError("diffusion checkpoint topology does not match its condition size");
  }
  return m;
}

std::uint64_t diffusion_fingerprint(const DiffusionModel& model) {
  return checkpoint_fingerprint(model_checkpoint(model), "diffusion");
}

}  // namespace rewardlab
