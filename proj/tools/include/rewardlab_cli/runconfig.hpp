#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rewardlab/dataset.hpp"
#include "rewardlab/diffusion.hpp"
#include "rewardlab/env.hpp"
#include "rewardlab/penalties.hpp"
#include "rewardlab/policy.hpp"
#include "rewardlab/synthbench.hpp"
#include "rewardlab/worldmodel.hpp"

namespace rewardlab::cli {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every recognized key, in echo order.
const std::vector<ConfigKey>& config_keys();

/// Flat key=value run configuration. Every key has a default; unknown keys
/// are rejected.
class RunConfig {
 public:
  RunConfig();

  /// "key = value" lines; '#' starts a comment, blank lines are skipped.
  static RunConfig from_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  double number(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;

  /// Fully resolved configuration in the same format from_text() reads.
  std::string to_text() const;

  /// Hash of every key under the given prefixes (a prefix "seed" matches the
  /// key exactly). Paths and the thread count are never part of a hash.
  std::uint64_t section_hash(std::initializer_list<std::string_view> prefixes) const;

  std::uint64_t seed() const;
  std::filesystem::path out() const { return get("out"); }

  ColumnSchema schema() const;
  EmbeddingConfig embedding() const;
  DiffusionConfig diffusion() const;
  BeliefBuildOptions beliefs() const;
  PenaltyConfig penalty() const;
  EnvConfig env() const;  // categories are attached from the dataset
  ActorCriticConfig actor_critic() const;
  PolicyTrainConfig policy_training() const;
  SynthConfig synth() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace rewardlab::cli
