#include "rewardlab/penalties.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "rewardlab/errors.hpp"

namespace rewardlab {

KGramStore::KGramStore(std::size_t k, std::size_t item_count, double smoothing)
    : k_(k), item_count_(item_count), smoothing_(smoothing), tables_(k + 1) {
  if (k < 1) throw ConfigError("k-gram order must be >= 1");
  if (item_count < 1) throw ConfigError("k-gram store needs at least one item");
  if (!(smoothing >= 0.0)) throw ConfigError("smoothing must be non-negative");
}

void KGramStore::add_sequence(std::span<const ItemId> items) {
  for (ItemId item : items) {
    if (item >= item_count_) throw IndexError("item outside the k-gram catalog");
    ++tables_[0][{}][item];
  }
  for (std::size_t order = 1; order <= k_; ++order) {
    for (std::size_t end = order; end < items.size(); ++end) {
      Context ctx(items.begin() + static_cast<std::ptrdiff_t>(end - order),
                  items.begin() + static_cast<std::ptrdiff_t>(end));
      std::sort(ctx.begin(), ctx.end());
      ++tables_[order][ctx][items[end]];
    }
  }
}

const KGramStore::Counts* KGramStore::find(std::size_t order,
                                           const Context& sorted_context) const {
  if (order >= tables_.size()) return nullptr;
  const auto& table = tables_[order];
  auto it = table.find(sorted_context);
  return it == table.end() ? nullptr : &it->second;
}

std::string KGramStore::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "# kgram k=" << k_ << " items=" << item_count_ << " smoothing=" << smoothing_
      << '\n';
  for (std::size_t order = 0; order < tables_.size(); ++order) {
    for (const auto& [ctx, counts] : tables_[order]) {
      out << order << '\t';
      for (std::size_t j = 0; j < ctx.size(); ++j) out << (j ? "," : "") << ctx[j];
      out << '\t';
      bool first = true;
      for (const auto& [item, count] : counts) {
        out << (first ? "" : ",") << item << ':' << count;
        first = false;
      }
      out << '\n';
    }
  }
  return out.str();
}

KGramStore KGramStore::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty k-gram store");
  std::size_t k = 0;
  std::size_t items = 0;
  double smoothing = 0.0;
  if (std::sscanf(line.c_str(), "# kgram k=%zu items=%zu smoothing=%lf", &k, &items,
                  &smoothing) != 3) {
    throw FormatError("k-gram store header is malformed");
  }
  KGramStore store(k, items, smoothing);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string order_s, ctx_s, counts_s;
    if (!std::getline(fields, order_s, '\t') || !std::getline(fields, ctx_s, '\t') ||
        !std::getline(fields, counts_s)) {
      throw ParseError("k-gram line needs three tab-separated fields", line_no);
    }
    try {
      const auto order = std::stoul(order_s);
      if (order > k) throw ParseError("order exceeds k", line_no);
      Context ctx;
      std::istringstream cs(ctx_s);
      for (std::string tok; std::getline(cs, tok, ',');) ctx.push_back(std::stoul(tok));
      Counts counts;
      std::istringstream ns(counts_s);
      for (std::string tok; std::getline(ns, tok, ',');) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos) throw ParseError("count without ':'", line_no);
        counts[static_cast<ItemId>(std::stoul(tok.substr(0, colon)))] =
            std::stoull(tok.substr(colon + 1));
      }
      store.tables_[order][ctx] = std::move(counts);
    } catch (const std::logic_error&) {
      throw ParseError("non-numeric field in k-gram line", line_no);
    }
  }
  return store;
}

KGramStore build_kgram_store(std::span<const InteractionEvent> events, std::size_t k,
                             std::size_t item_count, double smoothing) {
  KGramStore store(k, item_count, smoothing);
  std::map<UserId, std::vector<std::pair<std::uint32_t, ItemId>>> logs;
  for (const auto& e : events) logs[e.user].emplace_back(e.position, e.item);
  std::vector<ItemId> seq;
  for (auto& [user, log] : logs) {
    std::sort(log.begin(), log.end());
    seq.clear();
    for (const auto& [pos, item] : log) seq.push_back(item);
    store.add_sequence(seq);
  }
  return store;
}

std::vector<double> behavior_dist(const KGramStore& store, std::span<const ItemId> context) {
  const std::size_t n = store.item_count();
  for (ItemId item : context) {
    if (item >= n) throw IndexError("context item outside the catalog");
  }
  const std::size_t usable = std::min(context.size(), store.order());
  std::span<const ItemId> window = context.subspan(context.size() - usable);

  const KGramStore::Counts* counts = nullptr;
  KGramStore::Context key;
  for (std::size_t order = usable;; --order) {
    key.assign(window.end() - static_cast<std::ptrdiff_t>(order), window.end());
    std::sort(key.begin(), key.end());
    counts = store.find(order, key);
    if (counts != nullptr || order == 0) break;
  }

  std::vector<double> dist(n, store.smoothing());
  double total = store.smoothing() * static_cast<double>(n);
  if (counts != nullptr) {
    for (const auto& [item, count] : *counts) {
      dist[item] += static_cast<double>(count);
      total += static_cast<double>(count);
    }
  }
  if (total <= 0.0) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  for (double& p : dist) p /= total;
  return dist;
}

double entropy_penalty(std::span<const double> dist) {
  if (dist.empty()) throw ContractError("entropy penalty of an empty distribution");
  const double sum = std::accumulate(dist.begin(), dist.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ContractError("distribution sums to " + std::to_string(sum) + ", not 1");
  }
  const double n = static_cast<double>(dist.size());
  double kl = 0.0;
  for (double p : dist) {
    if (p < 0.0) throw ContractError("distribution has a negative entry");
    if (p > 0.0) kl += p * std::log(p * n);
  }
  return -kl;
}

double window_entropy_penalty(const KGramStore& store, std::span<const ItemId> history,
                              std::size_t k) {
  if (history.empty()) throw ContractError("entropy penalty needs a non-empty history");
  const std::size_t len = std::min(k, history.size());
  return entropy_penalty(behavior_dist(store, history.subspan(history.size() - len)));
}

std::vector<std::size_t> sample_positions(std::size_t i, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pos(i);
  std::iota(pos.begin(), pos.end(), 0);
  if (i <= k) return pos;
  for (std::size_t j = 0; j < k; ++j) {
    std::swap(pos[j], pos[uniform_index(rng, j, i - 1)]);
  }
  pos.resize(k);
  std::sort(pos.begin(), pos.end());
  return pos;
}

double interactive_penalty(const KGramStore& store, std::span<const ItemId> history,
                           std::size_t k, Rng& rng) {
  if (history.empty()) throw ContractError("interactive penalty needs a non-empty history");
  if (history.size() <= k) return window_entropy_penalty(store, history, k);
  const auto positions = sample_positions(history.size(), k, rng);
  std::vector<ItemId> context;
  context.reserve(positions.size());
  for (std::size_t p : positions) context.push_back(history[p]);
  return entropy_penalty(behavior_dist(store, context));
}

double decay_weight(double step, double alpha, double xi) {
  if (step < 0.0) throw ContractError("decay step must be non-negative");
  return alpha * (std::exp(-xi * step) + 1.0);
}

void PenaltyConfig::validate() const {
  if (k < 1) throw ConfigError("penalty.k must be >= 1");
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0)) throw ConfigError("penalty lambdas must be >= 0");
  if (!(alpha > 0.0 && xi > 0.0)) throw ConfigError("penalty.alpha and penalty.xi must be > 0");
  if (!(smoothing >= 0.0)) throw ConfigError("penalty.smoothing must be >= 0");
}

double blend_weight(std::size_t step, const PenaltyConfig& cfg) {
  if (cfg.omega_override) return *cfg.omega_override;
  return decay_weight(static_cast<double>(step), cfg.alpha, cfg.xi);
}

double reallocate_reward(const RewardBelief& belief, double pe, double pi, std::size_t step,
                         const PenaltyConfig& cfg) {
  const double w = blend_weight(step, cfg);
  return belief.mean - cfg.lambda1 * belief.variance +
         cfg.lambda2 * ((1.0 - w) * pi + w * pe);
}

}  // namespace rewardlab
