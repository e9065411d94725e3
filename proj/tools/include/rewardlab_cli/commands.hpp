#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rewardlab/dataset.hpp"
#include "rewardlab_cli/runconfig.hpp"

namespace rewardlab::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3, kStale = 4 };

/// Maps a library error onto the documented exit codes.
int exit_code_for(const std::exception& err);

/// Where each stage puts its artifacts under the output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path dataset_dir() const { return root / "dataset"; }
  std::filesystem::path manifest() const { return dataset_dir() / "manifest.json"; }
  std::filesystem::path events() const { return dataset_dir() / "events.csv"; }
  std::filesystem::path categories() const { return dataset_dir() / "categories.csv"; }
  std::filesystem::path world_dir() const { return root / "world"; }
  std::filesystem::path embeddings() const { return world_dir() / "embeddings.ckpt"; }
  std::filesystem::path diffusion() const { return world_dir() / "diffusion.ckpt"; }
  std::filesystem::path beliefs() const { return world_dir() / "beliefs.ckpt"; }
  std::filesystem::path policy_dir() const { return root / "policy"; }
  std::filesystem::path policy() const { return policy_dir() / "policy.ckpt"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path report() const { return eval_dir() / "report.json"; }
  std::filesystem::path ablation_dir() const { return root / "ablation"; }
};

struct LoadedDataset {
  InteractionLog log;
  DatasetSplit split;
  std::vector<int> categories;  // empty when the dataset has none
  std::uint64_t fingerprint = 0;
};

/// Reads the ingested dataset back, checking it still matches the config.
LoadedDataset load_dataset(const RunConfig& cfg);

// Pipeline stages. Each refuses to overwrite its outputs unless `force`,
// echoes the resolved config under <out>/resolved/, and logs to `log`.
void cmd_gen_synthetic(const RunConfig& cfg, bool force, std::ostream& log);
void cmd_ingest(const RunConfig& cfg, bool force, std::ostream& log);
void cmd_train_embeddings(const RunConfig& cfg, bool force, std::ostream& log);
void cmd_train_world(const RunConfig& cfg, bool force, std::ostream& log);
void cmd_train_policy(const RunConfig& cfg, bool force, std::ostream& log);
void cmd_eval(const RunConfig& cfg, bool force, std::ostream& log);
/// Returns false when some variant diverged (its failure is in the report).
bool cmd_ablate(const RunConfig& cfg, bool force, std::ostream& log);

/// Full command line (argv[0] excluded) to exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rewardlab::cli
