#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rewardlab/env.hpp"
#include "rewardlab/policy.hpp"

namespace rewardlab {

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population

  friend bool operator==(const MetricSummary&, const MetricSummary&) = default;
};

MetricSummary summarize(std::span<const double> values);

struct EpisodeRecord {
  UserId user = 0;
  double r_tra = 0.0;
  double r_each = 0.0;
  std::size_t length = 0;
  Termination cause = Termination::running;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

/// Metrics count raw (belief-mean) rewards only.
struct EvalReport {
  MetricSummary r_tra;
  MetricSummary r_each;
  MetricSummary length;
  std::size_t episodes = 0;
  std::uint64_t config_fingerprint = 0;
  std::vector<EpisodeRecord> per_episode;

  nlohmann::json to_json() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport report_from(std::span<const Trajectory> trajectories,
                       std::uint64_t config_fingerprint);

/// The rollouts behind evaluate(), for trajectory dumps.
std::vector<Trajectory> evaluation_rollouts(Policy& policy, const Environment& env,
                                            std::size_t n_episodes, std::uint64_t seed);

/// n_episodes rollouts; users drawn uniformly from derive_seed(seed,
/// "eval-users"), episode e seeded with derive_seed(seed, "eval-episode", e).
EvalReport evaluate(Policy& policy, const Environment& env, std::size_t n_episodes,
                    std::uint64_t seed, std::uint64_t config_fingerprint = 0);

/// Aligned-column text rendering of one or more reports.
std::string format_report_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

enum class Variant { full, no_uncertainty, no_diversity, no_PE, no_PI };

std::string to_string(Variant v);
const std::vector<Variant>& all_variants();

struct AblationSpec {
  std::vector<Variant> variants = all_variants();
};

/// Everything a variant needs to train and evaluate. Beliefs come in two
/// flavours: the diffusion table and the matrix-factorization point table.
struct LabComponents {
  const EmbeddingTable* embeddings = nullptr;
  const BeliefTable* diffusion_beliefs = nullptr;
  const BeliefTable* point_beliefs = nullptr;
  const KGramStore* store = nullptr;
  PenaltyConfig penalty;
  EnvConfig env;
  ActorCriticConfig actor_critic;
  std::size_t train_episodes = 2000;
  std::size_t eval_episodes = 100;
};

/// Switches a variant applies on top of the full configuration.
struct VariantSettings {
  PenaltyConfig penalty;
  bool point_beliefs = false;
};

VariantSettings variant_settings(Variant v, const PenaltyConfig& base);

/// Fingerprint of everything that determines a report besides the seed.
std::uint64_t config_fingerprint(const LabComponents& lab, const VariantSettings& settings);

struct VariantOutcome {
  Variant variant = Variant::full;
  VariantSettings settings;
  std::optional<EvalReport> report;
  std::vector<LearningCurvePoint> curve;
  std::string failure;  // set when training diverged

  bool ok() const { return report.has_value(); }
};

struct TrainedVariant {
  PolicyTrainResult training;
  Environment env;
};

/// Trains one variant's policy from a fresh initialization.
TrainedVariant train_variant(Variant v, const LabComponents& lab, std::uint64_t seed,
                             const std::function<void(std::size_t, const Trajectory&)>&
                                 on_episode = {});

/// Trains and evaluates every variant with the same seed and data.
std::map<std::string, VariantOutcome> run_ablation(const AblationSpec& spec,
                                                   const LabComponents& lab,
                                                   std::uint64_t seed);

nlohmann::json ablation_to_json(const std::map<std::string, VariantOutcome>& outcomes);
std::string ablation_table(const std::map<std::string, VariantOutcome>& outcomes);

}  // namespace rewardlab
