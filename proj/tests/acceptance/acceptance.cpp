// Acceptance suite: one PASS/FAIL line per criterion, at fixed tolerances.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rewardlab/diffusion.hpp"
#include "rewardlab/env.hpp"
#include "rewardlab/errors.hpp"
#include "rewardlab/evalharness.hpp"
#include "rewardlab/penalties.hpp"
#include "rewardlab/policy.hpp"
#include "rewardlab/synthbench.hpp"
#include "rewardlab/tensorcore.hpp"
#include "rewardlab/worldmodel.hpp"
#include "rewardlab_cli/commands.hpp"
#include "rewardlab_cli/runconfig.hpp"

namespace fs = std::filesystem;
using namespace rewardlab;
using Clock = std::chrono::steady_clock;

namespace {

class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void near(double actual, double expected, double tol, const std::string& what) {
    std::ostringstream os;
    os.precision(10);
    os << what << ": " << actual << " vs " << expected << " (tol " << tol << ")";
    expect(std::abs(actual - expected) <= tol, os.str());
  }
  void note(const std::string& line) { notes_.push_back(line); }

  const std::vector<std::string>& failures() const { return failures_; }
  const std::vector<std::string>& notes() const { return notes_; }

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

bool run_criterion(int id, const std::string& name, double limit_s,
                   const std::function<void(Checks&)>& body) {
  Checks checks;
  const auto start = Clock::now();
  try {
    body(checks);
  } catch (const std::exception& err) {
    checks.expect(false, std::string("unexpected exception: ") + err.what());
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  checks.expect(secs < limit_s, "runtime " + fmt(secs, 4) + " s exceeds " + fmt(limit_s) + " s");
  const bool ok = checks.failures().empty();
  std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << ": " << name << "  ["
            << fmt(secs, 4) << " s, limit " << fmt(limit_s) << " s]\n";
  for (const auto& n : checks.notes()) std::cout << "      " << n << '\n';
  for (const auto& f : checks.failures()) std::cout << "      failed: " << f << '\n';
  std::cout.flush();
  return ok;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

std::vector<double> gaussian_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * standard_normal(rng);
  return v;
}

// Parameter and input gradients of output . w against central differences.
void gradient_check(Checks& checks, const std::string& name, DenseNet net, Rng& rng,
                    double& worst) {
  for (auto& p : net.parameters()) p += 0.05 * standard_normal(rng);  // nonzero biases
  auto x = gaussian_vector(rng, net.input_size());
  const auto w = gaussian_vector(rng, net.output_size());
  const auto g = backward(net, x, w);
  const auto numeric = numerical_gradient(net.parameters(), [&] { return dot(forward(net, x), w); });
  const auto numeric_in = numerical_gradient(x, [&] { return dot(forward(net, x), w); });
  const double err_p = max_relative_error(g.params, numeric);
  const double err_x = max_relative_error(g.input, numeric_in);
  checks.expect(err_p < 1e-4, name + " parameter gradient max rel err " + fmt(err_p));
  checks.expect(err_x < 1e-4, name + " input gradient max rel err " + fmt(err_x));
  worst = std::max({worst, err_p, err_x});
}

void criterion_gradients(Checks& checks) {
  Rng rng = make_stream(101);
  double worst = 0.0;
  const std::size_t dim = 32;
  const DiffusionConfig dc;
  const auto model = make_diffusion_model(2 * dim, dc);
  gradient_check(checks, "eps-network", model.net, rng, worst);
  const auto items = gaussian_vector(rng, 100 * dim, 0.3);
  ActorCriticConfig acc;
  acc.seed = 5;
  const auto ac = make_actor_critic(items, 100, dim, acc);
  gradient_check(checks, "actor", ac.actor, rng, worst);
  gradient_check(checks, "critic", ac.critic, rng, worst);
  checks.note("eps-network " + fmt(double(model.net.parameter_count()), 8) + " params, actor " +
              fmt(double(ac.actor.parameter_count()), 8) + ", critic " +
              fmt(double(ac.critic.parameter_count()), 8) + "; worst rel err " + fmt(worst));
}

void criterion_diffusion(Checks& checks) {
  double worst_rec = 0.0;
  for (const auto& s : {build_schedule(50, 1e-4, 0.02), build_schedule(10, 1e-4, 0.02),
                        build_schedule(10, 0.01, 0.2)}) {
    for (int t = 1; t <= s.steps(); ++t) {
      const double expected = s.alpha_bar(t - 1) * (1.0 - s.beta(t));
      worst_rec = std::max(worst_rec, std::abs(s.alpha_bar(t) - expected) / expected);
    }
  }
  checks.expect(worst_rec <= 1e-15, "schedule recurrence rel err " + fmt(worst_rec));

  const auto s = build_schedule(10, 1e-4, 0.02);
  const double x0 = 0.7;
  constexpr int n = 100000;
  double worst_z = 0.0;
  for (int t = 1; t <= 10; ++t) {
    Rng rng = make_stream(derive_seed(202, "moments", static_cast<std::uint64_t>(t)));
    double sum = 0.0;
    double sq = 0.0;
    for (int k = 0; k < n; ++k) {
      const double x = q_sample(x0, t, standard_normal(rng), s);
      sum += x;
      sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    const double true_var = 1.0 - s.alpha_bar(t);
    const double z_mean = std::abs(mean - std::sqrt(s.alpha_bar(t)) * x0) / std::sqrt(true_var / n);
    const double z_var = std::abs(var - true_var) / (true_var * std::sqrt(2.0 / n));
    checks.expect(z_mean <= 3.0, "q_sample mean at t=" + std::to_string(t) + " off by " +
                                     fmt(z_mean) + " standard errors");
    checks.expect(z_var <= 3.0, "q_sample variance at t=" + std::to_string(t) + " off by " +
                                    fmt(z_var) + " standard errors");
    worst_z = std::max({worst_z, z_mean, z_var});
  }

  Rng rng = make_stream(203);
  double worst_x0 = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const auto one = NoiseSchedule::from_betas({0.01 + 0.9 * uniform01(rng)});
    const double truth = -0.4 + 1.8 * uniform01(rng);
    const double eps = standard_normal(rng);
    const double x1 = q_sample(truth, 1, eps, one);
    Rng unused = make_stream(0);
    const auto r = denoise_from(one, [&](double, int) { return eps; }, x1, unused);
    worst_x0 = std::max(worst_x0, std::abs(r.raw - truth));
  }
  checks.expect(worst_x0 <= 1e-6, "teacher-forced reconstruction error " + fmt(worst_x0));
  checks.note("recurrence rel err " + fmt(worst_rec) + ", worst moment deviation " +
              fmt(worst_z, 3) + " SE, reconstruction err " + fmt(worst_x0));
}

RewardSampler scripted(std::vector<double> values) {
  auto cursor = std::make_shared<std::size_t>(0);
  return [values = std::move(values), cursor](Rng&) { return values[(*cursor)++ % values.size()]; };
}

void criterion_belief(Checks& checks) {
  Rng rng = make_stream(0);
  const auto b = predict_belief(scripted({0.2, 0.4, 0.6}), 3, rng);
  checks.near(b.mean, 0.4, 1e-12, "mean of {0.2, 0.4, 0.6}");
  checks.near(b.variance, 0.026667, 1e-6, "variance of {0.2, 0.4, 0.6} (printed value)");
  checks.near(b.variance, 0.08 / 3.0, 1e-12, "variance of {0.2, 0.4, 0.6}");
  for (double v : {0.0, 0.3, 0.7, 1.0}) {
    const auto flat = predict_belief(scripted({v}), 5, rng);
    checks.near(flat.variance, 0.0, 1e-12, "variance of identical samples " + fmt(v));
    checks.near(flat.mean, v, 1e-12, "mean of identical samples " + fmt(v));
  }

  constexpr std::size_t m = 10000;
  Rng mc = make_stream(303);
  const double mu = 0.5;
  const double sigma = 0.1;
  const auto est = predict_belief([&](Rng& r) { return mu + sigma * standard_normal(r); }, m, mc);
  const double z_mean = std::abs(est.mean - mu) / (sigma / std::sqrt(double(m)));
  const double z_var =
      std::abs(est.variance - sigma * sigma) / (sigma * sigma * std::sqrt(2.0 / double(m)));
  checks.expect(z_mean <= 3.0, "Monte-Carlo mean off by " + fmt(z_mean) + " SE");
  checks.expect(z_var <= 3.0, "Monte-Carlo variance off by " + fmt(z_var) + " SE");
  checks.note("M=10^4 deviations: mean " + fmt(z_mean, 3) + " SE, variance " + fmt(z_var, 3) +
              " SE");
}

std::vector<InteractionEvent> log_of(UserId user, const std::vector<ItemId>& items) {
  std::vector<InteractionEvent> out;
  for (std::uint32_t p = 0; p < items.size(); ++p) out.push_back({user, items[p], 0.0, 0.5, p});
  return out;
}

std::vector<InteractionEvent> random_logs(Rng& rng, std::size_t users, std::size_t items) {
  std::vector<InteractionEvent> events;
  for (UserId u = 0; u < users; ++u) {
    std::vector<ItemId> seq(1 + uniform_index(rng, 0, 12));
    for (auto& x : seq) x = static_cast<ItemId>(uniform_index(rng, 0, items - 1));
    const auto more = log_of(u, seq);
    events.insert(events.end(), more.begin(), more.end());
  }
  return events;
}

void criterion_penalties(Checks& checks) {
  checks.near(entropy_penalty(std::vector<double>(4, 0.25)), 0.0, 1e-9, "P_E of uniform");
  checks.near(entropy_penalty(std::vector<double>{1.0, 0.0, 0.0, 0.0}), -std::log(4.0), 1e-9,
              "P_E of a 4-item point mass");

  Rng rng = make_stream(404);
  std::size_t out_of_range = 0;
  for (int c = 0; c < 10000; ++c) {
    const std::size_t n = 2 + uniform_index(rng, 0, 30);
    std::vector<double> p(n);
    double total = 0.0;
    for (auto& x : p) {
      x = uniform_index(rng, 0, 3) == 0 ? 0.0 : -std::log(1.0 - uniform01(rng));
      total += x;
    }
    if (total == 0.0) p[0] = total = 1.0;
    for (auto& x : p) x /= total;
    const double pe = entropy_penalty(p);
    if (pe > 1e-12 || pe < -std::log(static_cast<double>(n)) - 1e-12) ++out_of_range;
  }
  checks.expect(out_of_range == 0,
                std::to_string(out_of_range) + " of 10^4 distributions left [-ln I, 0]");

  checks.near(decay_weight(0, 0.5, 1.0), 1.0, 1e-6, "omega(0)");
  checks.near(decay_weight(1, 0.5, 1.0), 0.683940, 1e-6, "omega(1)");
  for (int l = 1; l <= 30; ++l) {
    checks.expect(decay_weight(l, 0.5, 1.0) < decay_weight(l - 1, 0.5, 1.0),
                  "omega not strictly decreasing at l=" + std::to_string(l));
  }

  double worst_slope = 0.0;
  bool monotone = true;
  for (int c = 0; c < 2000; ++c) {
    PenaltyConfig cfg;
    cfg.lambda1 = 0.01 + uniform01(rng);
    cfg.lambda2 = uniform01(rng);
    const std::size_t l = uniform_index(rng, 0, 30);
    const RewardBelief base{uniform01(rng), uniform01(rng), 10};
    const double pe = -uniform01(rng);
    const double pi = -uniform01(rng);
    const double h = 0.01 + 0.1 * uniform01(rng);
    const double r0 = reallocate_reward(base, pe, pi, l, cfg);
    const double w = decay_weight(static_cast<double>(l), cfg.alpha, cfg.xi);
    RewardBelief up = base;
    up.mean += h;
    RewardBelief noisier = base;
    noisier.variance += h;
    const double d_mean = reallocate_reward(up, pe, pi, l, cfg) - r0;
    const double d_var = reallocate_reward(noisier, pe, pi, l, cfg) - r0;
    const double d_pe = reallocate_reward(base, pe + h, pi, l, cfg) - r0;
    const double d_pi = reallocate_reward(base, pe, pi + h, l, cfg) - r0;
    worst_slope = std::max({worst_slope, std::abs(d_mean - h), std::abs(d_var + cfg.lambda1 * h),
                            std::abs(d_pe - cfg.lambda2 * w * h),
                            std::abs(d_pi - cfg.lambda2 * (1 - w) * h)});
    monotone = monotone && d_mean > 0 && d_var < 0 && d_pe >= 0 && d_pi >= 0;
  }
  checks.expect(worst_slope <= 1e-12, "reallocation slope error " + fmt(worst_slope));
  checks.expect(monotone, "reallocation not monotone in mean, variance and penalties");

  std::size_t mismatches = 0;
  for (int c = 0; c < 500; ++c) {
    const std::size_t items = 2 + uniform_index(rng, 0, 8);
    const std::size_t k = 1 + uniform_index(rng, 0, 4);
    const double smoothing = uniform_index(rng, 0, 1) == 0 ? 0.0 : uniform01(rng);
    const auto store = build_kgram_store(random_logs(rng, 4, items), k, items, smoothing);
    std::vector<ItemId> history(k);
    for (auto& x : history) x = static_cast<ItemId>(uniform_index(rng, 0, items - 1));
    Rng draw = make_stream(rng());
    if (interactive_penalty(store, history, k, draw) != window_entropy_penalty(store, history, k)) {
      ++mismatches;
    }
  }
  checks.expect(mismatches == 0, "P_I with k = i differs from P_E in " +
                                     std::to_string(mismatches) + " of 500 cases");
  checks.note("slope error " + fmt(worst_slope) + ", omega(1) = " +
              fmt(decay_weight(1, 0.5, 1.0), 8));
}

// Count every (context, next) window of each user log by scanning, with
// oldest-first backoff, independently of the store's tables.
std::vector<double> brute_force_dist(const std::vector<std::vector<ItemId>>& logs,
                                     std::vector<ItemId> context, std::size_t items,
                                     double smoothing) {
  while (true) {
    std::vector<double> counts(items, 0.0);
    double total = 0.0;
    auto key = context;
    std::sort(key.begin(), key.end());
    for (const auto& seq : logs) {
      for (std::size_t p = context.size(); p < seq.size(); ++p) {
        std::vector<ItemId> window(seq.begin() + static_cast<std::ptrdiff_t>(p - context.size()),
                                   seq.begin() + static_cast<std::ptrdiff_t>(p));
        std::sort(window.begin(), window.end());
        if (window == key) {
          counts[seq[p]] += 1.0;
          total += 1.0;
        }
      }
    }
    if (total > 0.0 || context.empty()) {
      const double denom = total + smoothing * static_cast<double>(items);
      if (denom == 0.0) return std::vector<double>(items, 1.0 / static_cast<double>(items));
      for (auto& c : counts) c = (c + smoothing) / denom;
      return counts;
    }
    context.erase(context.begin());
  }
}

void criterion_behavior(Checks& checks) {
  constexpr ItemId a = 0, b = 1, c = 2, d = 3;
  const std::size_t items = 5;  // item 4 never appears
  const std::vector<std::vector<ItemId>> logs = {{a, b, c, a, d}, {b, c, a, d, c}};
  std::vector<InteractionEvent> events;
  for (UserId u = 0; u < logs.size(); ++u) {
    const auto more = log_of(u, logs[u]);
    events.insert(events.end(), more.begin(), more.end());
  }
  std::vector<std::vector<ItemId>> contexts{{}};
  for (std::size_t len = 1; len <= 3; ++len) {
    const std::size_t total = static_cast<std::size_t>(std::pow(items, len));
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<ItemId> ctx;
      for (std::size_t r = code, j = 0; j < len; ++j, r /= items) {
        ctx.push_back(static_cast<ItemId>(r % items));
      }
      contexts.push_back(ctx);
    }
  }

  const std::size_t k = 3;
  const auto exact = build_kgram_store(events, k, items, 0.0);
  const auto smooth = build_kgram_store(events, k, items, 0.01);
  std::size_t exact_mismatch = 0;
  double worst_smooth = 0.0;
  for (const auto& ctx : contexts) {
    if (behavior_dist(exact, ctx) != brute_force_dist(logs, ctx, items, 0.0)) ++exact_mismatch;
    const auto got = behavior_dist(smooth, ctx);
    const auto want = brute_force_dist(logs, ctx, items, 0.01);
    for (std::size_t j = 0; j < items; ++j) {
      worst_smooth = std::max(worst_smooth, std::abs(got[j] - want[j]));
    }
  }
  checks.expect(exact_mismatch == 0, std::to_string(exact_mismatch) + " of " +
                                         std::to_string(contexts.size()) +
                                         " contexts differ from enumeration at smoothing 0");
  checks.expect(worst_smooth <= 1e-12, "smoothed distribution error " + fmt(worst_smooth));

  auto twice = events;
  for (auto e : events) {
    e.user += 2;
    twice.push_back(e);
  }
  const auto doubled = build_kgram_store(twice, k, items, 0.0);
  double worst_scale = 0.0;
  for (const auto& ctx : contexts) {
    const auto p1 = behavior_dist(exact, ctx);
    const auto p2 = behavior_dist(doubled, ctx);
    for (std::size_t j = 0; j < items; ++j) {
      worst_scale = std::max(worst_scale, std::abs(p1[j] - p2[j]));
    }
  }
  checks.expect(worst_scale <= 1e-12, "duplicated log changes distributions by " +
                                          fmt(worst_scale));
  checks.note(std::to_string(contexts.size()) + " contexts enumerated; smoothed err " +
              fmt(worst_smooth) + ", duplication err " + fmt(worst_scale));
}

// One seed of the 100 x 100 x 30 synthetic benchmark with its world model.
struct SeedWorld {
  std::uint64_t seed = 0;
  SyntheticData data;
  InteractionLog log;
  DatasetSplit split;
  EmbeddingTable mf;
  std::size_t dim = 0;
  BeliefTable beliefs;
  std::vector<int> categories;
  std::vector<bool> sparse;  // by dense item id
  double build_seconds = 0.0;
};

std::unique_ptr<SeedWorld> build_world(std::uint64_t seed) {
  const auto start = Clock::now();
  auto w = std::make_unique<SeedWorld>();
  w->seed = seed;
  SynthConfig sc;
  sc.seed = seed;
  w->data = generate(sc);
  std::istringstream in(event_file_text(w->data));
  ColumnSchema schema;
  schema.rating_min = 0.0;
  schema.rating_max = 1.0;
  w->log = parse_log(in, schema);
  w->split = split_dataset(w->log.events, 0.8, seed);
  EmbeddingConfig ec;
  ec.seed = seed;
  w->dim = ec.dim;
  w->mf = train_embeddings(w->split.train, w->log.num_users(), w->log.num_items(), ec).table;
  DiffusionConfig dc;
  dc.seed = seed;
  const auto trained =
      train_diffusion(w->split.train, w->mf, make_diffusion_model(2 * ec.dim, dc), dc);
  BeliefBuildOptions bo;
  bo.seed = seed;
  w->beliefs = build_belief_table(trained.model, w->mf, bo);
  for (ItemId i = 0; i < w->log.num_items(); ++i) {
    const std::size_t raw = parse_label(w->log.items.raw(i));
    w->categories.push_back(w->data.world.item_category[raw]);
    w->sparse.push_back(w->data.world.sparse_item[raw]);
  }
  w->build_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return w;
}

class WorldCache {
 public:
  const SeedWorld& get(std::uint64_t seed) {
    auto& slot = worlds_[seed];
    if (!slot) slot = build_world(seed);
    return *slot;
  }

 private:
  std::map<std::uint64_t, std::unique_ptr<SeedWorld>> worlds_;
};

void criterion_world_quality(Checks& checks, WorldCache& cache) {
  double rmse_diff = 0.0;
  double rmse_mf = 0.0;
  double pd_sparse = 0.0;
  double pd_dense = 0.0;
  for (std::uint64_t seed : {0, 1, 2}) {
    const SeedWorld& w = cache.get(seed);
    double sse = 0.0;
    for (const auto& e : w.split.test) {
      const double d = w.beliefs.at(e.user, e.item).mean - e.reward;
      sse += d * d;
    }
    const double r_diff = std::sqrt(sse / static_cast<double>(w.split.test.size()));
    const double r_mf = rmse(w.mf, w.split.test);
    double vs = 0.0, vd = 0.0, ns = 0.0, nd = 0.0;
    for (UserId u = 0; u < w.beliefs.users(); ++u) {
      for (ItemId i = 0; i < w.beliefs.items(); ++i) {
        const double v = w.beliefs.at(u, i).variance;
        if (w.sparse[i]) {
          vs += v;
          ns += 1.0;
        } else {
          vd += v;
          nd += 1.0;
        }
      }
    }
    checks.note("seed " + std::to_string(seed) + ": RMSE diffusion " + fmt(r_diff) + ", MF " +
                fmt(r_mf) + "; P_D sparse " + fmt(vs / ns) + ", dense " + fmt(vd / nd) +
                "  (world built in " + fmt(w.build_seconds, 3) + " s)");
    rmse_diff += r_diff / 3.0;
    rmse_mf += r_mf / 3.0;
    pd_sparse += vs / ns / 3.0;
    pd_dense += vd / nd / 3.0;
  }
  checks.note("mean RMSE diffusion " + fmt(rmse_diff) + " vs MF " + fmt(rmse_mf) +
              "; mean P_D sparse " + fmt(pd_sparse) + " vs dense " + fmt(pd_dense));
  checks.expect(rmse_diff <= rmse_mf + 0.02, "diffusion RMSE " + fmt(rmse_diff) +
                                                 " exceeds MF RMSE + 0.02 = " +
                                                 fmt(rmse_mf + 0.02));
  checks.expect(pd_sparse > pd_dense,
                "P_D sparse " + fmt(pd_sparse) + " not above dense " + fmt(pd_dense));
}

ActorCritic small_model(std::size_t items, std::size_t dim, std::uint64_t seed,
                        std::size_t encoding_size) {
  Rng rng = make_stream(seed);
  const auto vectors = gaussian_vector(rng, items * dim);
  ActorCriticConfig cfg;
  cfg.hidden = 16;
  cfg.seed = seed;
  return make_actor_critic(vectors, items, dim, cfg, encoding_size);
}

Environment environment_for(const SeedWorld& w, const KGramStore& store,
                            const PenaltyConfig& penalty) {
  Environment env;
  env.beliefs = &w.beliefs;
  env.store = &store;
  env.embeddings = &w.mf;
  env.penalty = penalty;
  env.config.item_categories = w.categories;
  return env;
}

void criterion_policy(Checks& checks, WorldCache& cache) {
  {
    auto m = small_model(2, 2, 7, 3);
    const std::vector<double> enc{0.3, -0.2, 0.5};
    auto opt = A2COptimizers::for_model(m, 1e-2, 3e-2);
    Rng rng = make_stream(8);
    for (int u = 0; u < 200; ++u) {
      std::vector<Transition> batch;
      for (int b = 0; b < 8; ++b) {
        Transition tr;
        tr.encoding = enc;
        tr.next_encoding = enc;
        tr.action = act(m, enc, {}, rng).item;
        tr.reward = tr.action == 0 ? 1.0 : 0.0;
        tr.done = true;
        batch.push_back(tr);
      }
      a2c_update(m, batch, opt);
    }
    const double p = m.probabilities(enc, {})[0];
    checks.expect(p > 0.9, "bandit: P(better arm) = " + fmt(p));
    checks.note("bandit: P(better arm) after 200 updates " + fmt(p));
  }
  {
    auto m = small_model(1, 2, 9, 3);
    const std::vector<std::vector<double>> states{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    const double rewards[] = {0.5, 0.2, 1.0};
    std::vector<Transition> batch;
    for (std::size_t t = 0; t < 3; ++t) {
      Transition tr;
      tr.encoding = states[t];
      tr.next_encoding = t < 2 ? states[t + 1] : states[t];
      tr.reward = rewards[t];
      tr.done = t == 2;
      batch.push_back(tr);
    }
    auto opt = A2COptimizers::for_model(m, 1e-2, 3e-2);
    for (int u = 0; u < 3000; ++u) a2c_update(m, batch, opt);
    const double v2 = 1.0;
    const double v1 = 0.2 + m.gamma * v2;
    const double v0 = 0.5 + m.gamma * v1;
    checks.near(m.value(states[2]), v2, 0.05, "critic V(s2)");
    checks.near(m.value(states[1]), v1, 0.05, "critic V(s1)");
    checks.near(m.value(states[0]), v0, 0.05, "critic V(s0)");
    checks.note("critic values " + fmt(m.value(states[0])) + ", " + fmt(m.value(states[1])) +
                ", " + fmt(m.value(states[2])) + " vs " + fmt(v0) + ", " + fmt(v1) + ", " +
                fmt(v2));
  }
  {
    const SeedWorld& w = cache.get(0);
    const PenaltyConfig pc;
    const auto store = build_kgram_store(w.split.train, pc.k, w.log.num_items(), pc.smoothing);
    const Environment env = environment_for(w, store, pc);
    ActorCriticConfig acc;
    const auto init = make_actor_critic(w.mf.item_vectors, w.log.num_items(), w.dim, acc);
    PolicyTrainConfig tc;
    tc.episodes = 500;
    const auto trained = train_policy(init, env, tc);
    double first = 0.0;
    double last = 0.0;
    for (std::size_t k = 0; k < 50; ++k) {
      first += trained.curve[k].r_tra / 50.0;
      last += trained.curve[tc.episodes - 1 - k].r_tra / 50.0;
    }
    checks.expect(last >= 1.2 * first, "500-episode training: last-50 mean R_tra " + fmt(last) +
                                           " below 1.2 x first-50 mean " + fmt(first));
    checks.note("500 episodes: first-50 R_tra " + fmt(first) + ", last-50 " + fmt(last) +
                ", ratio " + fmt(last / first, 4));
  }
}

void criterion_ablation(Checks& checks, WorldCache& cache) {
  double len_full = 0.0, len_nod = 0.0, tra_full = 0.0, tra_nod = 0.0;
  for (std::uint64_t seed : {0, 1, 2}) {
    const SeedWorld& w = cache.get(seed);
    const PenaltyConfig pc;
    const auto store = build_kgram_store(w.split.train, pc.k, w.log.num_items(), pc.smoothing);
    const auto point = build_point_belief_table(w.mf, 0);
    LabComponents lab;
    lab.embeddings = &w.mf;
    lab.diffusion_beliefs = &w.beliefs;
    lab.point_beliefs = &point;
    lab.store = &store;
    lab.penalty = pc;
    lab.env.item_categories = w.categories;
    lab.actor_critic.seed = seed;
    lab.train_episodes = 2000;
    lab.eval_episodes = 100;
    AblationSpec spec;
    spec.variants = {Variant::full, Variant::no_diversity};
    const auto out = run_ablation(spec, lab, seed);
    const auto& full = out.at("full");
    const auto& nod = out.at("no_diversity");
    checks.expect(full.ok() && nod.ok(), "seed " + std::to_string(seed) + ": a variant diverged");
    if (!full.ok() || !nod.ok()) continue;
    checks.note("seed " + std::to_string(seed) + ": full Length " + fmt(full.report->length.mean) +
                " R_tra " + fmt(full.report->r_tra.mean) + "; no_diversity Length " +
                fmt(nod.report->length.mean) + " R_tra " + fmt(nod.report->r_tra.mean));
    len_full += full.report->length.mean / 3.0;
    len_nod += nod.report->length.mean / 3.0;
    tra_full += full.report->r_tra.mean / 3.0;
    tra_nod += nod.report->r_tra.mean / 3.0;
  }
  checks.note("3-seed mean: full Length " + fmt(len_full) + " R_tra " + fmt(tra_full) +
              "; no_diversity Length " + fmt(len_nod) + " R_tra " + fmt(tra_nod));
  checks.expect(len_full >= len_nod,
                "full Length " + fmt(len_full) + " below no_diversity " + fmt(len_nod));
  checks.expect(tra_full >= tra_nod,
                "full R_tra " + fmt(tra_full) + " below no_diversity " + fmt(tra_nod));

  // With both penalties off the shaped reward is the raw reward, and the
  // trajectories themselves are those of the penalized environment.
  const SeedWorld& w = cache.get(0);
  const PenaltyConfig on;
  PenaltyConfig off;
  off.lambda1 = off.lambda2 = 0.0;
  const auto store = build_kgram_store(w.split.train, on.k, w.log.num_items(), on.smoothing);
  const Environment env_on = environment_for(w, store, on);
  const Environment env_off = environment_for(w, store, off);
  ActorCriticConfig acc;
  const auto model = make_actor_critic(w.mf.item_vectors, w.log.num_items(), w.dim, acc);
  ActorCriticPolicy policy(model, w.mf, env_off.config);
  std::size_t shaped_mismatch = 0;
  std::size_t raw_mismatch = 0;
  for (std::uint64_t e = 0; e < 100; ++e) {
    const UserId user = static_cast<UserId>(e % w.log.num_users());
    const auto t_off = rollout(env_off, policy, user, derive_seed(808, "rollout", e));
    const auto t_on = rollout(env_on, policy, user, derive_seed(808, "rollout", e));
    if (t_off.shaped_rewards != t_off.raw_rewards) ++shaped_mismatch;
    if (t_off.items != t_on.items || t_off.raw_rewards != t_on.raw_rewards) ++raw_mismatch;
  }
  checks.expect(shaped_mismatch == 0, std::to_string(shaped_mismatch) +
                                          " of 100 episodes with shaped != raw at zero penalties");
  checks.expect(raw_mismatch == 0, std::to_string(raw_mismatch) +
                                       " of 100 episodes whose raw trajectory changed");
  PolicyTrainConfig tc;
  tc.episodes = 50;
  const auto a = train_policy(model, env_off, tc);
  const auto b = train_policy(model, env_off, tc);
  checks.expect(a.curve == b.curve && a.model == b.model,
                "zero-penalty training is not reproducible");
}

void criterion_determinism(Checks& checks) {
  const fs::path source = REWARDLAB_SOURCE_DIR;
  const fs::path work = fs::current_path() / "acceptance_work";
  fs::remove_all(work);
  auto cfg = cli::RunConfig::load(source / "configs" / "example.conf");
  cfg.set("dataset.path", (source / "data" / "synthetic" / "events.csv").string());
  cfg.set("dataset.categories", (source / "data" / "synthetic" / "categories.csv").string());
  std::vector<std::string> reports;
  for (const char* run : {"a", "b"}) {
    cfg.set("out", (work / run).string());
    const fs::path conf = work / (std::string(run) + ".conf");
    fs::create_directories(work);
    write_file_bytes(conf, cfg.to_text());
    for (const char* stage : {"ingest", "train-world", "train-policy", "eval"}) {
      std::ostringstream out;
      std::ostringstream err;
      const int code = cli::run_cli({stage, "--config", conf.string()}, out, err);
      checks.expect(code == 0, std::string("run ") + run + ", " + stage + " exited " +
                                   std::to_string(code) + ": " + err.str());
      if (code != 0) return;
    }
    reports.push_back(read_file_bytes(cli::Layout{work / run}.report()));
  }
  checks.expect(reports[0] == reports[1], "the two reports differ");
  checks.expect(!reports[0].empty(), "empty report");
  checks.note("report.json " + std::to_string(reports[0].size()) + " bytes, identical: " +
              (reports[0] == reports[1] ? "yes" : "no"));
  fs::remove_all(work);
}

}  // namespace

int main() {
  WorldCache cache;
  bool ok = true;
  ok &= run_criterion(1, "numeric-kernel gradient checks", 10, criterion_gradients);
  ok &= run_criterion(2, "diffusion identities", 30, criterion_diffusion);
  ok &= run_criterion(3, "belief moments and sampler oracle", 10, criterion_belief);
  ok &= run_criterion(4, "penalty suite", 10, criterion_penalties);
  ok &= run_criterion(5, "behavior-policy oracle", 5, criterion_behavior);
  ok &= run_criterion(6, "world-model quality (3 seeds, includes world builds)", 300,
                      [&](Checks& c) { criterion_world_quality(c, cache); });
  ok &= run_criterion(7, "policy-learning sanity (reuses the seed-0 world)", 300,
                      [&](Checks& c) { criterion_policy(c, cache); });
  ok &= run_criterion(8, "ablation direction and zero-penalty replay (reuses worlds)", 600,
                      [&](Checks& c) { criterion_ablation(c, cache); });
  ok &= run_criterion(9, "end-to-end determinism", 600, criterion_determinism);
  std::cout << (ok ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL") << '\n';
  return ok ? 0 : 1;
}
