#include "rewardlab/evalharness.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "rewardlab/errors.hpp"

namespace rewardlab {

MetricSummary summarize(std::span<const double> values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / n)};
}

EvalReport report_from(std::span<const Trajectory> trajectories,
                       std::uint64_t config_fingerprint) {
  EvalReport report;
  report.episodes = trajectories.size();
  report.config_fingerprint = config_fingerprint;
  std::vector<double> r_tra, r_each, length;
  for (const auto& traj : trajectories) {
    EpisodeRecord rec;
    rec.user = traj.user;
    rec.r_tra = traj.total_raw();
    rec.length = traj.length();
    rec.r_each = rec.length > 0 ? rec.r_tra / static_cast<double>(rec.length) : 0.0;
    rec.cause = traj.cause;
    r_tra.push_back(rec.r_tra);
    r_each.push_back(rec.r_each);
    length.push_back(static_cast<double>(rec.length));
    report.per_episode.push_back(rec);
  }
  report.r_tra = summarize(r_tra);
  report.r_each = summarize(r_each);
  report.length = summarize(length);
  return report;
}

std::vector<Trajectory> evaluation_rollouts(Policy& policy, const Environment& env,
                                            std::size_t n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw ConfigError("evaluation needs at least one episode");
  Rng user_rng = make_stream(derive_seed(seed, "eval-users"));
  std::vector<Trajectory> trajectories;
  trajectories.reserve(n_episodes);
  for (std::size_t e = 0; e < n_episodes; ++e) {
    const auto user = static_cast<UserId>(uniform_index(user_rng, 0, env.num_users() - 1));
    trajectories.push_back(rollout(env, policy, user, derive_seed(seed, "eval-episode", e)));
  }
  return trajectories;
}

EvalReport evaluate(Policy& policy, const Environment& env, std::size_t n_episodes,
                    std::uint64_t seed, std::uint64_t config_fingerprint) {
  return report_from(evaluation_rollouts(policy, env, n_episodes, seed), config_fingerprint);
}

namespace {

nlohmann::json metric_json(const MetricSummary& m) {
  return {{"mean", m.mean}, {"std", m.std}};
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json episodes_json = nlohmann::json::array();
  for (const auto& rec : per_episode) {
    episodes_json.push_back({{"user", rec.user},
                             {"R_tra", rec.r_tra},
                             {"R_each", rec.r_each},
                             {"Length", rec.length},
                             {"cause", to_string(rec.cause)}});
  }
  return {{"R_tra", metric_json(r_tra)},
          {"R_each", metric_json(r_each)},
          {"Length", metric_json(length)},
          {"episodes", episodes},
          {"config_fingerprint", fingerprint_hex(config_fingerprint)},
          {"per_episode", std::move(episodes_json)}};
}

std::string format_report_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t name_width = 8;
  for (const auto& [name, r] : rows) name_width = std::max(name_width, name.size() + 2);
  std::ostringstream out;
  out << pad("variant", name_width) << pad("R_tra", 20) << pad("R_each", 18)
      << pad("Length", 18) << "episodes\n";
  for (const auto& [name, r] : rows) {
    out << pad(name, name_width) << pad(fixed(r.r_tra.mean) + " +- " + fixed(r.r_tra.std), 20)
        << pad(fixed(r.r_each.mean) + " +- " + fixed(r.r_each.std), 18)
        << pad(fixed(r.length.mean) + " +- " + fixed(r.length.std), 18) << r.episodes << '\n';
  }
  return out.str();
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_uncertainty: return "no_uncertainty";
    case Variant::no_diversity: return "no_diversity";
    case Variant::no_PE: return "no_PE";
    case Variant::no_PI: return "no_PI";
  }
  return "unknown";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> variants = {Variant::full, Variant::no_uncertainty,
                                                Variant::no_diversity, Variant::no_PE,
                                                Variant::no_PI};
  return variants;
}

VariantSettings variant_settings(Variant v, const PenaltyConfig& base) {
  VariantSettings s{base, false};
  switch (v) {
    case Variant::full: break;
    case Variant::no_uncertainty:
      s.penalty.lambda1 = 0.0;
      s.point_beliefs = true;
      break;
    case Variant::no_diversity: s.penalty.lambda2 = 0.0; break;
    case Variant::no_PE: s.penalty.omega_override = 0.0; break;
    case Variant::no_PI: s.penalty.omega_override = 1.0; break;
  }
  return s;
}

std::uint64_t config_fingerprint(const LabComponents& lab, const VariantSettings& settings) {
  const auto& p = settings.penalty;
  const auto& e = lab.env;
  const auto& a = lab.actor_critic;
  nlohmann::json j = {
      {"penalty",
       {{"k", p.k}, {"lambda1", p.lambda1}, {"lambda2", p.lambda2}, {"alpha", p.alpha},
        {"xi", p.xi}, {"smoothing", p.smoothing},
        {"omega_override", p.omega_override ? nlohmann::json(*p.omega_override) : nlohmann::json(nullptr)}}},
      {"env",
       {{"max_length", e.max_length}, {"window", e.window}, {"quit_threshold", e.quit_threshold},
        {"cosine_threshold", e.cosine_threshold}, {"no_repeat", e.no_repeat},
        {"categories", e.item_categories}}},
      {"actor_critic",
       {{"hidden", a.hidden}, {"gamma", a.gamma}, {"entropy_coef", a.entropy_coef},
        {"lr", a.lr}, {"critic_lr", a.critic_lr}}},
      {"point_beliefs", settings.point_beliefs},
      {"train_episodes", lab.train_episodes},
      {"eval_episodes", lab.eval_episodes}};
  const BeliefTable* beliefs = settings.point_beliefs ? lab.point_beliefs : lab.diffusion_beliefs;
  if (beliefs != nullptr) j["beliefs"] = fingerprint_hex(beliefs->model_fingerprint());
  return fnv1a64(j.dump());
}

TrainedVariant train_variant(Variant v, const LabComponents& lab, std::uint64_t seed,
                             const std::function<void(std::size_t, const Trajectory&)>& on_episode) {
  if (lab.embeddings == nullptr || lab.store == nullptr || lab.diffusion_beliefs == nullptr) {
    throw ContractError("lab components are incomplete");
  }
  const VariantSettings settings = variant_settings(v, lab.penalty);
  if (settings.point_beliefs && lab.point_beliefs == nullptr) {
    throw ContractError("no_uncertainty needs the point-prediction belief table");
  }
  Environment env;
  env.beliefs = settings.point_beliefs ? lab.point_beliefs : lab.diffusion_beliefs;
  env.store = lab.store;
  env.embeddings = lab.embeddings;
  env.penalty = settings.penalty;
  env.config = lab.env;

  ActorCriticConfig ac = lab.actor_critic;
  ac.seed = derive_seed(seed, "policy-init");
  ActorCritic model = make_actor_critic(lab.embeddings->item_vectors, lab.embeddings->items,
                                        lab.embeddings->dim, ac);
  PolicyTrainConfig tc;
  tc.episodes = lab.train_episodes;
  tc.lr = ac.lr;
  tc.critic_lr = ac.critic_lr;
  tc.seed = derive_seed(seed, "policy-train");
  tc.on_episode = on_episode;
  return {train_policy(std::move(model), env, tc), env};
}

std::map<std::string, VariantOutcome> run_ablation(const AblationSpec& spec,
                                                   const LabComponents& lab,
                                                   std::uint64_t seed) {
  std::map<std::string, VariantOutcome> outcomes;
  for (Variant v : spec.variants) {
    VariantOutcome out;
    out.variant = v;
    out.settings = variant_settings(v, lab.penalty);
    try {
      TrainedVariant trained = train_variant(v, lab, seed);
      out.curve = trained.training.curve;
      ActorCriticPolicy policy(trained.training.model, *lab.embeddings, lab.env);
      out.report = evaluate(policy, trained.env, lab.eval_episodes,
                            derive_seed(seed, "evaluation"),
                            config_fingerprint(lab, out.settings));
    } catch (const DivergenceError& err) {
      out.failure = err.what();
    }
    outcomes.emplace(to_string(v), std::move(out));
  }
  return outcomes;
}

nlohmann::json ablation_to_json(const std::map<std::string, VariantOutcome>& outcomes) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, out] : outcomes) {
    nlohmann::json entry;
    entry["lambda1"] = out.settings.penalty.lambda1;
    entry["lambda2"] = out.settings.penalty.lambda2;
    entry["omega_override"] = out.settings.penalty.omega_override
                                  ? nlohmann::json(*out.settings.penalty.omega_override)
                                  : nlohmann::json(nullptr);
    entry["world_model"] = out.settings.point_beliefs ? "mf_point" : "diffusion";
    if (out.ok()) {
      entry["report"] = out.report->to_json();
    } else {
      entry["failure"] = out.failure;
    }
    j[name] = std::move(entry);
  }
  return j;
}

std::string ablation_table(const std::map<std::string, VariantOutcome>& outcomes) {
  std::vector<std::pair<std::string, EvalReport>> rows;
  std::string failures;
  for (Variant v : all_variants()) {
    auto it = outcomes.find(to_string(v));
    if (it == outcomes.end()) continue;
    if (it->second.ok()) {
      rows.emplace_back(it->first, *it->second.report);
    } else {
      failures += it->first + ": FAILED (" + it->second.failure + ")\n";
    }
  }
  return format_report_table(rows) + failures +
         "note: no_uncertainty uses the matrix-factorization point predictor as its world model\n";
}

}  // namespace rewardlab
