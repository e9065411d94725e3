#include "rewardlab/worldmodel.hpp"

#include <algorithm>
#include <thread>

#include "rewardlab/errors.hpp"

namespace rewardlab {

RewardBelief summarize_samples(std::span<const double> raw_samples) {
  if (raw_samples.empty()) throw ConfigError("belief needs at least one sample (M >= 1)");
  const double m = static_cast<double>(raw_samples.size());
  const auto [lo, hi] = std::minmax_element(raw_samples.begin(), raw_samples.end());
  // Rounding in sum / m would otherwise leave a residue for identical samples.
  if (*lo == *hi) return {std::clamp(*lo, 0.0, 1.0), 0.0, raw_samples.size()};
  double sum = 0.0;
  for (double x : raw_samples) sum += x;
  const double mean = sum / m;
  double sq = 0.0;
  for (double x : raw_samples) sq += (x - mean) * (x - mean);
  return {std::clamp(mean, 0.0, 1.0), sq / m, raw_samples.size()};
}

RewardBelief predict_belief(const RewardSampler& sampler, std::size_t samples, Rng& rng) {
  if (samples == 0) throw ConfigError("belief needs at least one sample (M >= 1)");
  std::vector<double> raw(samples);
  for (auto& x : raw) x = sampler(rng);
  return summarize_samples(raw);
}

RewardBelief predict_belief(const DiffusionModel& model, const EmbeddingTable& embeddings,
                            UserId user, ItemId item, std::size_t samples, Rng& rng) {
  if (user >= embeddings.users || item >= embeddings.items) {
    throw IndexError("user or item outside the embedding table");
  }
  const ConditionedSampler sampler(model, condition_for(embeddings, user, item));
  return predict_belief([&](Rng& r) { return sampler.sample(r).raw; }, samples, rng);
}

BeliefTable::BeliefTable(std::size_t users, std::size_t items, std::size_t samples,
                         std::uint64_t seed, std::uint64_t model_fingerprint)
    : users_(users),
      items_(items),
      samples_(samples),
      seed_(seed),
      model_fingerprint_(model_fingerprint),
      beliefs_(users * items) {}

const RewardBelief& BeliefTable::at(UserId u, ItemId i) const {
  if (u >= users_ || i >= items_) throw IndexError("belief lookup outside the table");
  return beliefs_[static_cast<std::size_t>(u) * items_ + i];
}

RewardBelief& BeliefTable::at(UserId u, ItemId i) {
  if (u >= users_ || i >= items_) throw IndexError("belief lookup outside the table");
  return beliefs_[static_cast<std::size_t>(u) * items_ + i];
}

BeliefTable build_belief_table(const DiffusionModel& model, const EmbeddingTable& embeddings,
                               const BeliefBuildOptions& options) {
  if (options.samples == 0) throw ConfigError("belief needs at least one sample (M >= 1)");
  BeliefTable table(embeddings.users, embeddings.items, options.samples, options.seed,
                    diffusion_fingerprint(model));
  std::size_t threads = options.threads;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<std::size_t>(threads, std::max<std::size_t>(1, embeddings.users));

  auto worker = [&](std::size_t first_user, std::size_t stride) {
    std::vector<double> raw(options.samples);
    for (std::size_t u = first_user; u < embeddings.users; u += stride) {
      for (std::size_t i = 0; i < embeddings.items; ++i) {
        const auto user = static_cast<UserId>(u);
        const auto item = static_cast<ItemId>(i);
        const ConditionedSampler sampler(model, condition_for(embeddings, user, item));
        Rng rng = make_stream(pair_stream_seed(options.seed, user, item));
        for (auto& x : raw) x = sampler.sample(rng).raw;
        table.at(user, item) = summarize_samples(raw);
      }
    }
  };
  if (threads == 1) {
    worker(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker, k, threads);
  }
  return table;
}

BeliefTable build_point_belief_table(const EmbeddingTable& embeddings,
                                     std::uint64_t model_fingerprint) {
  BeliefTable table(embeddings.users, embeddings.items, 1, 0, model_fingerprint);
  for (UserId u = 0; u < embeddings.users; ++u) {
    for (ItemId i = 0; i < embeddings.items; ++i) {
      table.at(u, i) = {std::clamp(embeddings.predict(u, i), 0.0, 1.0), 0.0, 1};
    }
  }
  return table;
}

Checkpoint to_checkpoint(const BeliefTable& table) {
  Checkpoint ckpt;
  ckpt.header["U"] = table.users();
  ckpt.header["I"] = table.items();
  ckpt.header["M"] = table.samples();
  ckpt.header["seed"] = table.seed();
  ckpt.header["fingerprint"] = fingerprint_hex(table.model_fingerprint());
  ckpt.blob.reserve(2 * table.users() * table.items());
  for (UserId u = 0; u < table.users(); ++u) {
    for (ItemId i = 0; i < table.items(); ++i) {
      const auto& b = table.at(u, i);
      ckpt.blob.push_back(static_cast<float>(b.mean));
      ckpt.blob.push_back(static_cast<float>(b.variance));
    }
  }
  return ckpt;
}

BeliefTable beliefs_from_checkpoint(const Checkpoint& ckpt) {
  const auto users = ckpt.field("U").get<std::size_t>();
  const auto items = ckpt.field("I").get<std::size_t>();
  const auto samples = ckpt.field("M").get<std::size_t>();
  BeliefTable table(users, items, samples, ckpt.field("seed").get<std::uint64_t>(),
                    parse_fingerprint_hex(ckpt.field("fingerprint").get<std::string>()));
  if (ckpt.blob.size() != 2 * users * items) {
    throw FormatError("belief blob size does not match U x I");
  }
  std::size_t k = 0;
  for (UserId u = 0; u < users; ++u) {
    for (ItemId i = 0; i < items; ++i) {
      table.at(u, i) = {ckpt.blob[k], ckpt.blob[k + 1], samples};
      k += 2;
    }
  }
  return table;
}

}  // namespace rewardlab
