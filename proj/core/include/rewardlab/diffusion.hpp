#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rewardlab/checkpoint.hpp"
#include "rewardlab/dataset.hpp"
#include "rewardlab/rng.hpp"
#include "rewardlab/tensorcore.hpp"

namespace rewardlab {

/// Per-step noise variances and their cumulative products. Steps are
/// 1-based; alpha_bar(0) is 1 by convention.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  /// Arbitrary betas in (0, 1); used directly by tests with T = 1.
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const noexcept { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_.at(static_cast<std::size_t>(t - 1)); }
  double alpha(int t) const { return alpha_.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const {
    return t == 0 ? 1.0 : alpha_bar_.at(static_cast<std::size_t>(t - 1));
  }
  /// beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t).
  double posterior_variance(int t) const;

  const std::vector<double>& betas() const noexcept { return beta_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

/// Linear betas from beta_start to beta_end inclusive.
NoiseSchedule build_schedule(int steps, double beta_start, double beta_end);

/// Closed-form forward jump sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
/// Accepts 0 <= t <= T (t = 0 returns x0).
double q_sample(double x0, int t, double eps, const NoiseSchedule& schedule);

/// Sinusoidal embedding of step t: [sin(t w_j), cos(t w_j)] for angular
/// frequencies w_j geometric from 1 down to 1/T.
std::vector<double> time_embedding(int t, std::size_t dim, int steps);
void time_embedding(int t, int steps, std::span<double> out);

struct DiffusionConfig {
  int steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::size_t time_embed_dim = 16;
  std::size_t hidden = 64;
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  // Whether training draws t = 1; when false t is uniform over {2..T}.
  bool include_t1 = true;
  std::uint64_t seed = 0;
};

/// Conditional epsilon-predictor over scalar rewards. The network input is
/// [x_t, condition (2d), time embedding].
struct DiffusionModel {
  DenseNet net;
  NoiseSchedule schedule;
  std::size_t condition_dim = 0;
  std::size_t time_embed_dim = 16;
  static constexpr std::size_t reward_dim = 1;

  double predict_eps(double x_t, std::span<const double> condition, int t) const;

  friend bool operator==(const DiffusionModel&, const DiffusionModel&) = default;
};

DiffusionModel make_diffusion_model(std::size_t condition_dim, const DiffusionConfig& cfg);

/// e_u (+) e_i.
std::vector<double> condition_for(const EmbeddingTable& emb, UserId u, ItemId i);

struct DiffusionTrainResult {
  DiffusionModel model;
  std::vector<double> epoch_loss;
};

DiffusionTrainResult train_diffusion(std::span<const InteractionEvent> train,
                                     const EmbeddingTable& embeddings,
                                     DiffusionModel model, const DiffusionConfig& cfg);

/// Monte-Carlo estimate of E ||eps - eps_theta(x_t, c, t)||^2 over `samples`
/// draws of (event, t, eps).
double diffusion_loss(const DiffusionModel& model, std::span<const InteractionEvent> events,
                      const EmbeddingTable& embeddings, std::size_t samples, Rng& rng,
                      bool include_t1 = true);

/// eps-prediction with the condition already bound: (x_t, t) -> eps_hat.
using EpsPredictor = std::function<double(double x_t, int t)>;

struct ReverseSample {
  double raw = 0.0;       // clamped to [-0.5, 1.5]
  double reported = 0.0;  // clipped to [0, 1]
};

/// Ancestral DDPM sampling from a given x_T down to x_0 with fixed posterior
/// variance; no noise is added on the final step.
ReverseSample denoise_from(const NoiseSchedule& schedule, const EpsPredictor& eps_hat,
                           double x_T, Rng& rng);

/// Draws x_T ~ N(0, 1) and denoises under the given condition.
ReverseSample reverse_sample(const DiffusionModel& model, std::span<const double> condition,
                             Rng& rng);

/// Reverse sampler with the condition's first-layer contribution folded in.
/// Produces the same draws as reverse_sample() up to floating-point
/// summation order; used by the belief-table builder.
class ConditionedSampler {
 public:
  ConditionedSampler(const DiffusionModel& model, std::span<const double> condition);
  ReverseSample sample(Rng& rng) const;
  double predict_eps(double x_t, int t) const;

 private:
  const DiffusionModel* model_;
  std::vector<double> base_;  // W_c c + b for the first layer
  std::vector<double> time_terms_;  // steps x hidden: W_tau tau(t)
  std::vector<std::vector<double>> transposed_;  // layer l >= 1, in x out
  mutable std::vector<double> h1_, h2_;
};

Checkpoint to_checkpoint(const DiffusionModel& model, const DiffusionConfig& cfg);
DiffusionModel diffusion_from_checkpoint(const Checkpoint& ckpt);
std::uint64_t diffusion_fingerprint(const DiffusionModel& model);

}  // namespace rewardlab
