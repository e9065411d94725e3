#include "rewardlab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "rewardlab/errors.hpp"
#include "rewardlab/rng.hpp"

namespace rewardlab {

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delimiter)) fields.push_back(field);
  if (!line.empty() && line.back() == delimiter) fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::optional<double> parse_double(const std::string& text) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

struct RawRow {
  UserId user;
  ItemId item;
  double rating;
  double timestamp;
  std::size_t line;
};

}  // namespace

std::uint32_t IndexMap::intern(const std::string& raw) {
  auto [it, inserted] =
      dense_.try_emplace(raw, static_cast<std::uint32_t>(raw_.size()));
  if (inserted) raw_.push_back(raw);
  return it->second;
}

std::optional<std::uint32_t> IndexMap::find(const std::string& raw) const {
  auto it = dense_.find(raw);
  if (it == dense_.end()) return std::nullopt;
  return it->second;
}

double normalize_rating(double raw, double rating_min, double rating_max) {
  if (!(rating_max > rating_min)) {
    throw ConfigError("rating scale must satisfy min < max");
  }
  if (raw < rating_min || raw > rating_max) {
    throw RangeError("rating " + std::to_string(raw) + " outside declared range [" +
                     std::to_string(rating_min) + ", " + std::to_string(rating_max) + "]");
  }
  return (raw - rating_min) / (rating_max - rating_min);
}

double denormalize_reward(double reward, double rating_min, double rating_max) {
  return rating_min + reward * (rating_max - rating_min);
}

InteractionLog parse_log(std::istream& in, const ColumnSchema& schema) {
  if (!(schema.rating_max > schema.rating_min)) {
    throw ConfigError("rating scale must satisfy min < max");
  }
  const int needed = std::max({schema.user_col, schema.item_col, schema.rating_col,
                               schema.timestamp_col});
  if (schema.user_col < 0 || schema.item_col < 0 || schema.rating_col < 0) {
    throw ConfigError("user, item and rating columns must be non-negative");
  }

  InteractionLog log;
  log.rating_min = schema.rating_min;
  log.rating_max = schema.rating_max;
  std::vector<RawRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (schema.has_header && line_no == 1) continue;
    if (trim(line).empty()) continue;
    const auto fields = split_line(line, schema.delimiter);
    if (static_cast<int>(fields.size()) <= needed) {
      throw ParseError("expected at least " + std::to_string(needed + 1) +
                           " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    const std::string user = trim(fields[schema.user_col]);
    const std::string item = trim(fields[schema.item_col]);
    if (user.empty() || item.empty()) throw ParseError("empty user or item id", line_no);
    const auto rating = parse_double(trim(fields[schema.rating_col]));
    if (!rating) throw ParseError("rating is not a finite number", line_no);
    double timestamp = 0.0;
    if (schema.timestamp_col >= 0) {
      const auto ts = parse_double(trim(fields[schema.timestamp_col]));
      if (!ts) throw ParseError("timestamp is not a number", line_no);
      timestamp = *ts;
    }
    if (*rating < schema.rating_min || *rating > schema.rating_max) {
      throw RangeError("line " + std::to_string(line_no) + ": rating " +
                       trim(fields[schema.rating_col]) + " outside declared range [" +
                       std::to_string(schema.rating_min) + ", " +
                       std::to_string(schema.rating_max) + "]");
    }
    rows.push_back({log.users.intern(user), log.items.intern(item), *rating, timestamp,
                    line_no});
  }
  if (rows.empty()) throw EmptyDatasetError("dataset contains no events");

  // File order within each user, or timestamp order when a column is given.
  std::stable_sort(rows.begin(), rows.end(), [&](const RawRow& a, const RawRow& b) {
    if (a.user != b.user) return a.user < b.user;
    if (schema.timestamp_col >= 0) return a.timestamp < b.timestamp;
    return a.line < b.line;
  });
  log.events.reserve(rows.size());
  std::uint32_t position = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (k == 0 || rows[k].user != rows[k - 1].user) position = 0;
    log.events.push_back({rows[k].user, rows[k].item, rows[k].rating,
                          normalize_rating(rows[k].rating, schema.rating_min,
                                           schema.rating_max),
                          position++});
  }
  return log;
}

InteractionLog load_log(const std::filesystem::path& path, const ColumnSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  return parse_log(in, schema);
}

void write_normalized_log(const std::filesystem::path& path, const InteractionLog& log) {
  std::ostringstream out;
  out.precision(17);
  out << "user,item,raw_rating,reward,position\n";
  for (const auto& e : log.events) {
    out << log.users.raw(e.user) << ',' << log.items.raw(e.item) << ',' << e.raw_rating
        << ',' << e.reward << ',' << e.position << '\n';
  }
  write_file_bytes(path, out.str());
}

DatasetSplit split_dataset(std::span<const InteractionEvent> events, double fraction,
                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("split fraction must lie in (0, 1)");
  }
  if (events.size() < 2) throw ConfigError("split needs at least 2 events");

  std::map<UserId, std::vector<InteractionEvent>> by_user;
  for (const auto& e : events) by_user[e.user].push_back(e);

  const auto target =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(events.size())));
  struct Quota {
    UserId user;
    std::size_t base;
    double remainder;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [user, list] : by_user) {
    const double exact = fraction * static_cast<double>(list.size());
    const auto base = static_cast<std::size_t>(std::floor(exact));
    quotas.push_back({user, base, exact - static_cast<double>(base)});
    assigned += base;
  }
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quotas[a].remainder > quotas[b].remainder;
  });
  for (std::size_t k = 0; assigned < target && k < order.size(); ++k) {
    ++quotas[order[k]].base;
    ++assigned;
  }

  DatasetSplit split;
  split.split_fraction = fraction;
  split.seed = seed;
  std::size_t q = 0;
  for (auto& [user, list] : by_user) {
    Rng rng = make_stream(derive_seed(seed, "split", user));
    std::shuffle(list.begin(), list.end(), rng);
    const std::size_t n_train = quotas[q++].base;
    for (std::size_t k = 0; k < list.size(); ++k) {
      (k < n_train ? split.train : split.test).push_back(list[k]);
    }
  }
  const auto by_position = [](const InteractionEvent& a, const InteractionEvent& b) {
    return std::tie(a.user, a.position) < std::tie(b.user, b.position);
  };
  std::sort(split.train.begin(), split.train.end(), by_position);
  std::sort(split.test.begin(), split.test.end(), by_position);
  return split;
}

EmbeddingTable EmbeddingTable::zeros(std::size_t users, std::size_t items,
                                     std::size_t dim) {
  EmbeddingTable t;
  t.dim = dim;
  t.users = users;
  t.items = items;
  t.user_vectors.assign(users * dim, 0.0);
  t.item_vectors.assign(items * dim, 0.0);
  t.user_bias.assign(users, 0.0);
  t.item_bias.assign(items, 0.0);
  return t;
}

double EmbeddingTable::predict(UserId u, ItemId i) const {
  const auto eu = user(u);
  const auto ei = item(i);
  return std::inner_product(eu.begin(), eu.end(), ei.begin(), 0.0) + user_bias[u] +
         item_bias[i] + global_mean;
}

double rmse(const EmbeddingTable& table, std::span<const InteractionEvent> events) {
  if (events.empty()) return 0.0;
  double sse = 0.0;
  for (const auto& e : events) {
    const double err = e.reward - table.predict(e.user, e.item);
    sse += err * err;
  }
  return std::sqrt(sse / static_cast<double>(events.size()));
}

EmbeddingTrainResult train_embeddings(std::span<const InteractionEvent> train,
                                      std::size_t num_users, std::size_t num_items,
                                      const EmbeddingConfig& cfg) {
  if (cfg.dim < 1) throw ConfigError("embedding dimension must be >= 1");
  if (train.empty()) throw EmptyDatasetError("cannot train embeddings on an empty split");
  for (const auto& e : train) {
    if (e.user >= num_users || e.item >= num_items) {
      throw IndexError("event references a user or item outside the table");
    }
  }

  EmbeddingTrainResult result;
  EmbeddingTable& t = result.table;
  t = EmbeddingTable::zeros(num_users, num_items, cfg.dim);
  Rng init = make_stream(derive_seed(cfg.seed, "mf-init"));
  std::normal_distribution<double> small{0.0, cfg.init_std};
  for (auto& v : t.user_vectors) v = small(init);
  for (auto& v : t.item_vectors) v = small(init);
  double sum = 0.0;
  for (const auto& e : train) sum += e.reward;
  t.global_mean = sum / static_cast<double>(train.size());

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = make_stream(derive_seed(cfg.seed, "mf-shuffle"));
  const std::size_t d = cfg.dim;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t idx : order) {
      const auto& e = train[idx];
      const double err = e.reward - t.predict(e.user, e.item);
      double* pu = t.user_vectors.data() + e.user * d;
      double* qi = t.item_vectors.data() + e.item * d;
      t.user_bias[e.user] += cfg.lr * (err - cfg.reg * t.user_bias[e.user]);
      t.item_bias[e.item] += cfg.lr * (err - cfg.reg * t.item_bias[e.item]);
      for (std::size_t k = 0; k < d; ++k) {
        const double p = pu[k];
        const double q = qi[k];
        pu[k] += cfg.lr * (err * q - cfg.reg * p);
        qi[k] += cfg.lr * (err * p - cfg.reg * q);
      }
    }
    const double epoch_rmse = rmse(t, train);
    if (!std::isfinite(epoch_rmse)) {
      throw DivergenceError("matrix factorization diverged at epoch " +
                            std::to_string(epoch) + "; try a smaller learning rate");
    }
    result.epoch_rmse.push_back(epoch_rmse);
  }
  return result;
}

Checkpoint to_checkpoint(const EmbeddingTable& table, const EmbeddingConfig& cfg) {
  Checkpoint ckpt;
  ckpt.header["dims"] = {{"users", table.users}, {"items", table.items}, {"d", table.dim}};
  ckpt.header["seed"] = cfg.seed;
  ckpt.header["hyperparameters"] = {
      {"epochs", cfg.epochs}, {"lr", cfg.lr}, {"reg", cfg.reg}, {"init_std", cfg.init_std}};
  append_floats(ckpt.blob, table.user_vectors);
  append_floats(ckpt.blob, table.item_vectors);
  append_floats(ckpt.blob, table.user_bias);
  append_floats(ckpt.blob, table.item_bias);
  const double mean[] = {table.global_mean};
  append_floats(ckpt.blob, mean);
  return ckpt;
}

EmbeddingTable embeddings_from_checkpoint(const Checkpoint& ckpt) {
  const auto& dims = ckpt.field("dims");
  EmbeddingTable t;
  t.users = dims.at("users").get<std::size_t>();
  t.items = dims.at("items").get<std::size_t>();
  t.dim = dims.at("d").get<std::size_t>();
  std::size_t cursor = 0;
  t.user_vectors = take_floats(ckpt.blob, cursor, t.users * t.dim);
  t.item_vectors = take_floats(ckpt.blob, cursor, t.items * t.dim);
  t.user_bias = take_floats(ckpt.blob, cursor, t.users);
  t.item_bias = take_floats(ckpt.blob, cursor, t.items);
  t.global_mean = take_floats(ckpt.blob, cursor, 1).front();
  if (cursor != ckpt.blob.size()) throw FormatError("embedding blob has trailing values");
  return t;
}

}  // namespace rewardlab
