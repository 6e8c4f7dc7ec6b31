#include "seqmon/sim_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <thread>
#include <unordered_set>

namespace seqmon {

namespace {

std::int64_t draw_geometric(Rng& rng, double rho) {
  // Inverse CDF on {1, 2, ...}.
  constexpr double kCap = 1e15;
  const double u = 1.0 - uniform01(rng);  // (0, 1]
  const double k = std::floor(std::log(u) / std::log1p(-rho));
  return 1 + static_cast<std::int64_t>(std::min(k, kCap));
}

// Moves `count` uniformly chosen elements of `from` to the end of `into` (partial Fisher-Yates).
void sample_without_replacement(std::vector<ItemId>& from, std::size_t count, std::vector<ItemId>& into, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + uniform_index(rng, from.size() - i);
    std::swap(from[i], from[j]);
    into.push_back(from[i]);
  }
  from.erase(from.begin(), from.begin() + static_cast<std::ptrdiff_t>(count));
}

void require(bool ok, const char* key, const char* what) {
  if (!ok) throw std::invalid_argument(std::string(key) + ": " + what);
}

}  // namespace

StudyConfig StudyConfig::study1(ModelMode mode) {
  StudyConfig c;
  c.study = StudyKind::gaussian_streams;
  c.mode = mode;
  c.theta_lo = 1.0;
  c.theta_hi = 2.0;
  c.min_new_items = 0;
  c.replications = 200;
  return c;
}

StudyConfig StudyConfig::study2(ModelMode mode) {
  StudyConfig c;
  c.study = StudyKind::irt_responses;
  c.mode = mode;
  c.theta_lo = 0.05;
  c.theta_hi = 0.1;
  c.min_new_items = 5;
  c.replications = 100;
  return c;
}

void StudyConfig::validate() const {
  require(pool_size >= 1, "pool_size", "must be positive");
  require(horizon >= 1, "horizon", "must be positive");
  require(alpha > 0.0 && alpha < 1.0, "alpha", "must lie in (0,1)");
  if (selection.kind == SelectionPolicy::Kind::fixed_size_uniform)
    require(selection.size >= 1 && selection.size <= pool_size, "select_size", "must lie in [1, pool_size]");
  else
    require(selection.lambda > 0.0 && selection.lambda <= 1.0, "select_lambda", "must lie in (0,1]");
  require(rho_lo >= 0.0 && rho_lo < rho_hi && rho_hi < 1.0, "rho_hi", "need 0 <= rho_lo < rho_hi < 1");
  require(mu_lo <= mu_hi, "mu_hi", "must be at least mu_lo");
  require(misspec_covariance >= 0.0 && misspec_covariance < 1.0, "misspec_covariance", "must lie in [0,1)");
  require(beta0_lo <= beta0_hi, "beta0_hi", "must be at least beta0_lo");
  require(beta1_lo > 0.0 && beta1_lo <= beta1_hi, "beta1_lo", "need 0 < beta1_lo <= beta1_hi");
  require(pi_lo >= 0.0 && pi_lo <= pi_hi && pi_hi <= 1.0, "pi_hi", "need 0 <= pi_lo <= pi_hi <= 1");
  require(examinees_lo >= 1 && examinees_lo <= examinees_hi, "examinees_lo", "need 1 <= examinees_lo <= examinees_hi");
  require(m_lo <= m_hi, "m_hi", "must be at least m_lo");
  require(rho_bar > 0.0 && rho_bar < 1.0, "rho_bar", "must lie in (0,1)");
  require(theta_lo <= theta_hi, "theta_hi", "must be at least theta_lo");
  require(mode == ModelMode::known_model || theta_grid_size >= 2, "theta_grid_size", "must be at least 2");
  require(study == StudyKind::gaussian_streams || min_new_items >= 1, "min_new_items",
          "IRT studies need at least one never-exposed anchor item per administration");
  require(min_new_items <= pool_size, "min_new_items", "must not exceed pool_size");
  require(replications >= 1, "replications", "must be positive");
}

MonitorConfig StudyConfig::monitor_config() const {
  MonitorConfig m;
  m.alpha = alpha;
  m.rho_bar = rho_bar;
  m.theta_lo = theta_lo;
  m.theta_hi = theta_hi;
  m.theta_grid_size = theta_grid_size;
  m.mode = mode;
  return m;
}

const SimItem& PoolState::at(ItemId id) const {
  const auto it = std::lower_bound(items.begin(), items.end(), id,
                                   [](const SimItem& s, ItemId v) { return s.record.id < v; });
  if (it == items.end() || it->record.id != id) throw std::out_of_range("item not in pool");
  return *it;
}

SimItem& PoolState::at(ItemId id) { return const_cast<SimItem&>(std::as_const(*this).at(id)); }

std::size_t PoolState::never_exposed() const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [](const SimItem& s) { return s.exposures == 0; }));
}

SimItem draw_item(const StudyConfig& config, ItemId id, Rng& rng) {
  SimItem item;
  item.record.id = id;
  item.record.rho = config.rho_lo + (config.rho_hi - config.rho_lo) * (1.0 - uniform01(rng));
  item.gamma = draw_geometric(rng, item.record.rho);
  if (config.study == StudyKind::gaussian_streams) {
    item.record.mu = uniform(rng, config.mu_lo, config.mu_hi);
  } else {
    item.record.beta.beta0 = uniform(rng, config.beta0_lo, config.beta0_hi);
    item.record.beta.beta1 = uniform(rng, config.beta1_lo, config.beta1_hi);
    item.record.pi = uniform(rng, config.pi_lo, config.pi_hi);
  }
  return item;
}

PoolState initial_pool(const StudyConfig& config, Rng& rng) {
  PoolState pool;
  pool.items.reserve(config.pool_size);
  for (std::size_t i = 0; i < config.pool_size; ++i) pool.items.push_back(draw_item(config, pool.next_id++, rng));
  return pool;
}

StepDraw step_pool(PoolState& pool, const SelectionPolicy& policy, std::size_t min_new, Rng& rng) {
  if (pool.items.empty()) throw std::invalid_argument("step_pool: empty pool");
  if (policy.kind == SelectionPolicy::Kind::fixed_size_uniform && policy.size > pool.items.size())
    throw std::invalid_argument("step_pool: selection size exceeds pool size");

  std::vector<ItemId> fresh;
  std::vector<ItemId> rest;
  for (const auto& s : pool.items) (s.exposures == 0 ? fresh : rest).push_back(s.record.id);

  std::vector<ItemId> used;
  const std::size_t forced =
      std::min({min_new, fresh.size(),
                policy.kind == SelectionPolicy::Kind::fixed_size_uniform ? policy.size : fresh.size()});
  sample_without_replacement(fresh, forced, used, rng);
  rest.insert(rest.end(), fresh.begin(), fresh.end());
  std::sort(rest.begin(), rest.end());

  if (policy.kind == SelectionPolicy::Kind::fixed_size_uniform) {
    sample_without_replacement(rest, policy.size - forced, used, rng);
  } else {
    for (ItemId id : rest)
      if (uniform01(rng) < policy.lambda) used.push_back(id);
  }
  std::sort(used.begin(), used.end());

  StepDraw draw;
  draw.used = used;
  draw.post_change.reserve(used.size());
  for (ItemId id : used) {
    SimItem& s = pool.at(id);
    if (s.exposures == 0) draw.anchors.push_back(id);
    ++s.exposures;
    draw.post_change.push_back(s.exposures > s.gamma ? 1 : 0);
  }
  ++pool.time;
  return draw;
}

std::vector<double> gen_gaussian(std::span<const std::uint8_t> post_change, std::span<const double> mus,
                                 double misspec_covariance, Rng& rng) {
  if (!(misspec_covariance >= 0.0 && misspec_covariance < 1.0))
    throw std::invalid_argument("misspec_covariance must lie in [0,1)");
  if (post_change.size() != mus.size()) throw std::invalid_argument("gen_gaussian: size mismatch");
  const double shared = misspec_covariance > 0.0 ? standard_normal(rng) * std::sqrt(misspec_covariance) : 0.0;
  const double own_scale = std::sqrt(1.0 - misspec_covariance);
  std::vector<double> x(mus.size());
  for (std::size_t k = 0; k < mus.size(); ++k)
    x[k] = shared + own_scale * standard_normal(rng) + (post_change[k] ? mus[k] : 0.0);
  return x;
}

ResponseMatrix gen_irt(std::span<const SimItem* const> items, std::span<const std::uint8_t> post_change,
                       const PopulationModel& pop, int n_examinees, Rng& rng) {
  if (n_examinees < 1) throw std::invalid_argument("gen_irt: need at least one examinee");
  if (items.size() != post_change.size()) throw std::invalid_argument("gen_irt: size mismatch");
  const auto k_items = static_cast<Eigen::Index>(items.size());
  ResponseMatrix out;
  out.entries.resize(n_examinees, k_items);
  out.item_ids.reserve(items.size());
  for (const SimItem* s : items) out.item_ids.push_back(s->record.id);
  for (Eigen::Index n = 0; n < n_examinees; ++n) {
    const double theta = pop.mean + standard_normal(rng);
    for (Eigen::Index k = 0; k < k_items; ++k) {
      const SimItem& s = *items[static_cast<std::size_t>(k)];
      if (post_change[static_cast<std::size_t>(k)] && uniform01(rng) < s.record.pi) {
        out.entries(n, k) = 1;
        continue;
      }
      out.entries(n, k) = uniform01(rng) < irf_2pl(theta, s.record.beta) ? 1 : 0;
    }
  }
  return out;
}

StepMetrics compute_metrics(const std::function<bool(ItemId)>& changed, const DecisionOutcome& outcome) {
  std::size_t missed = 0;
  for (ItemId id : outcome.retained) missed += changed(id) ? 1 : 0;
  std::size_t false_alarms = 0;
  for (ItemId id : outcome.detected) false_alarms += changed(id) ? 0 : 1;
  StepMetrics m;
  m.fnp = static_cast<double>(missed) / static_cast<double>(std::max<std::size_t>(outcome.retained.size(), 1));
  m.fdp = static_cast<double>(false_alarms) / static_cast<double>(std::max<std::size_t>(outcome.detected.size(), 1));
  m.detections = outcome.detected.size();
  return m;
}

Replenishment replenish(PoolState& pool, std::span<const ItemId> detected, const StudyConfig& config, Rng& rng) {
  Replenishment r;
  const std::unordered_set<ItemId> drop(detected.begin(), detected.end());
  const auto before = pool.items.size();
  std::erase_if(pool.items, [&](const SimItem& s) { return drop.contains(s.record.id); });
  if (before - pool.items.size() != drop.size()) throw std::invalid_argument("replenish: detected item not in pool");
  r.removed.assign(detected.begin(), detected.end());
  std::sort(r.removed.begin(), r.removed.end());

  auto add_one = [&] {
    pool.items.push_back(draw_item(config, pool.next_id++, rng));
    r.added.push_back(pool.items.back().record.id);
  };
  // Replace every removed item; new ids are larger than all existing ones, so order is kept.
  for (std::size_t i = 0; i < drop.size(); ++i) add_one();
  while (pool.items.size() < config.pool_size) add_one();
  for (std::size_t fresh = pool.never_exposed(); fresh < config.min_new_items; ++fresh) add_one();
  return r;
}

MetricTrajectory run_replication(const StudyConfig& config, int replication, const TraceSink& sink) {
  config.validate();
  Rng rng(config.seed, static_cast<std::uint64_t>(replication));
  PoolState pool = initial_pool(config, rng);
  Monitor monitor(config.monitor_config(), config.statistic_kind());

  StepTrace trace;
  for (const auto& s : pool.items) {
    monitor.add_item(s.record);
    trace.added.push_back(s.record);
  }

  MetricTrajectory traj;
  traj.replication = replication;
  traj.seed = config.seed;
  for (int t = 1; t <= config.horizon; ++t) {
    trace.time = t;
    const StepDraw draw = step_pool(pool, config.selection, config.min_new_items, rng);

    StepReport report;
    if (config.study == StudyKind::gaussian_streams) {
      std::vector<double> mus;
      mus.reserve(draw.used.size());
      for (ItemId id : draw.used) mus.push_back(pool.at(id).record.mu);
      const std::vector<double> x = gen_gaussian(draw.post_change, mus, config.misspec_covariance, rng);
      trace.observations.clear();
      for (std::size_t k = 0; k < draw.used.size(); ++k) trace.observations.push_back({draw.used[k], x[k], 0.0, 0.0});
      report = monitor.step(trace.observations);
    } else {
      const int n = config.examinees_lo +
                    static_cast<int>(uniform_index(rng, static_cast<std::size_t>(config.examinees_hi - config.examinees_lo + 1)));
      const PopulationModel pop{uniform(rng, config.m_lo, config.m_hi)};
      std::vector<const SimItem*> used_items;
      for (ItemId id : draw.used) used_items.push_back(&pool.at(id));
      trace.responses = gen_irt(used_items, draw.post_change, pop, n, rng);
      trace.anchors = draw.anchors;
      report = monitor.step_responses(*trace.responses, draw.anchors);
    }

    const StepMetrics metrics =
        compute_metrics([&](ItemId id) { return pool.at(id).changed(); }, report.decision);
    traj.fnp.push_back(metrics.fnp);
    traj.fdp.push_back(metrics.fdp);
    traj.detections.push_back(metrics.detections);
    traj.realized_risk.push_back(report.decision.realized_risk);
    traj.pool_size.push_back(pool.items.size());
    std::vector<double> retained_scores;
    retained_scores.reserve(report.decision.retained.size());
    for (ItemId id : report.decision.retained) retained_scores.push_back(monitor.score(id));
    traj.retained_risk.push_back(compound_risk(retained_scores));

    trace.detected = report.decision.detected;
    if (sink) sink(trace);

    const Replenishment r = replenish(pool, report.decision.detected, config, rng);
    trace = StepTrace{};
    for (ItemId id : r.removed) monitor.remove_item(id);
    for (ItemId id : r.added) {
      monitor.add_item(pool.at(id).record);
      trace.added.push_back(pool.at(id).record);
    }
    trace.removed = r.removed;
  }
  return traj;
}

std::vector<MetricTrajectory> run_study(const StudyConfig& config) {
  config.validate();
  std::vector<MetricTrajectory> out(static_cast<std::size_t>(config.replications));
  unsigned threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(config.replications));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (int r = next++; r < config.replications && !failed; r = next++) {
      try {
        out[static_cast<std::size_t>(r)] = run_replication(config, r);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
  return out;
}

double lower_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  const auto idx = static_cast<std::size_t>(std::floor(p * static_cast<double>(values.size() - 1)));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx), values.end());
  return values[idx];
}

std::vector<QuantileRow> aggregate_quantiles(std::span<const MetricTrajectory> trajectories) {
  if (trajectories.empty()) throw std::invalid_argument("aggregate_quantiles: no trajectories");
  const std::size_t horizon = trajectories.front().fnp.size();
  for (const auto& tr : trajectories)
    if (tr.fnp.size() != horizon || tr.fdp.size() != horizon || tr.detections.size() != horizon)
      throw std::invalid_argument("aggregate_quantiles: trajectories have different horizons");

  std::vector<QuantileRow> rows;
  rows.reserve(horizon * 3);
  std::vector<double> values(trajectories.size());
  auto emit = [&](int t, const char* metric, auto&& get) {
    for (std::size_t r = 0; r < trajectories.size(); ++r) values[r] = get(trajectories[r]);
    QuantileRow row{t, metric, {}};
    for (std::size_t q = 0; q < kQuantileLevels.size(); ++q) row.q[q] = lower_quantile(values, kQuantileLevels[q]);
    rows.push_back(std::move(row));
  };
  for (std::size_t i = 0; i < horizon; ++i) {
    const int t = static_cast<int>(i) + 1;
    emit(t, "fnp", [i](const MetricTrajectory& tr) { return tr.fnp[i]; });
    emit(t, "fdp", [i](const MetricTrajectory& tr) { return tr.fdp[i]; });
    emit(t, "detections", [i](const MetricTrajectory& tr) { return static_cast<double>(tr.detections[i]); });
  }
  return rows;
}

}  // namespace seqmon
