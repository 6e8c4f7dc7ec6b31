#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqmon/compound_decision.hpp"
#include "seqmon/irt_sir.hpp"
#include "seqmon/monitor.hpp"
#include "seqmon/rng.hpp"

namespace seqmon {

enum class StudyKind { gaussian_streams, irt_responses };

struct SelectionPolicy {
  enum class Kind { fixed_size_uniform, bernoulli };
  Kind kind = Kind::fixed_size_uniform;
  std::size_t size = 50;  // fixed_size_uniform
  double lambda = 0.1;    // bernoulli
};

/// Every generator constant of one simulation study.
struct StudyConfig {
  StudyKind study = StudyKind::gaussian_streams;
  ModelMode mode = ModelMode::known_model;
  std::size_t pool_size = 500;
  int horizon = 50;
  double alpha = 0.01;
  SelectionPolicy selection;

  double rho_lo = 0.0;  // rho ~ U(rho_lo, rho_hi]
  double rho_hi = 0.1;
  double mu_lo = 1.0;   // Gaussian streams: post-change mean
  double mu_hi = 2.0;
  double misspec_covariance = 0.0;

  double beta0_lo = -2.0;  // IRT responses
  double beta0_hi = 2.0;
  double beta1_lo = 1.0;
  double beta1_hi = 1.5;
  double pi_lo = 0.05;
  double pi_hi = 0.1;
  int examinees_lo = 1001;
  int examinees_hi = 3000;
  double m_lo = -0.5;
  double m_hi = 0.5;

  // Bounded-model knowledge: rho <= rho_bar, parameter in [theta_lo, theta_hi].
  double rho_bar = 0.1;
  double theta_lo = 1.0;
  double theta_hi = 2.0;
  Eigen::Index theta_grid_size = 64;

  std::size_t min_new_items = 0;
  int replications = 200;
  std::uint64_t seed = 20201;
  unsigned threads = 0;  // 0 = hardware concurrency

  /// Study I defaults (Gaussian streams).
  static StudyConfig study1(ModelMode mode = ModelMode::known_model);
  /// Study II defaults (2PL responses, SIR statistics).
  static StudyConfig study2(ModelMode mode = ModelMode::known_model);

  /// Throws std::invalid_argument naming the offending key.
  void validate() const;
  MonitorConfig monitor_config() const;
  StatisticKind statistic_kind() const {
    return study == StudyKind::gaussian_streams ? StatisticKind::gaussian_shift : StatisticKind::sir;
  }
};

/// Simulated item with its hidden change point, counted in exposures.
struct SimItem {
  ItemRecord record;
  std::int64_t gamma = 1;      // change completes with the gamma-th exposure
  std::int64_t exposures = 0;

  /// Changed as of now: at least one exposure after the gamma-th.
  bool changed() const { return exposures > gamma; }
  std::int64_t exposures_until_change() const { return std::max<std::int64_t>(gamma - exposures, 0); }
};

struct PoolState {
  std::vector<SimItem> items;  // ascending id
  ItemId next_id = 1;
  std::int64_t time = 0;

  const SimItem& at(ItemId id) const;
  SimItem& at(ItemId id);
  std::size_t never_exposed() const;
};

/// Draws a fresh item (rho, gamma and generator parameters) from the study's ranges.
SimItem draw_item(const StudyConfig& config, ItemId id, Rng& rng);
PoolState initial_pool(const StudyConfig& config, Rng& rng);

struct StepDraw {
  std::vector<ItemId> used;     // S_t*, ascending id
  std::vector<std::uint8_t> post_change;  // per used item, for this exposure
  std::vector<ItemId> anchors;  // never exposed before this step
};

/// Samples S_t* and advances exposure counts. At least min(min_new, available) never-exposed items are
/// included; remaining slots follow the policy over the rest of the pool.
StepDraw step_pool(PoolState& pool, const SelectionPolicy& policy, std::size_t min_new, Rng& rng);

/// Equicorrelated normal statistics: sqrt(c) Z + sqrt(1-c) e_k, shifted by mu_k after the change.
std::vector<double> gen_gaussian(std::span<const std::uint8_t> post_change, std::span<const double> mus,
                                 double misspec_covariance, Rng& rng);

/// 2PL responses with preknowledge: a post-change item is answered correctly with probability pi,
/// otherwise by the 2PL model.
ResponseMatrix gen_irt(std::span<const SimItem* const> items, std::span<const std::uint8_t> post_change,
                       const PopulationModel& pop, int n_examinees, Rng& rng);

struct StepMetrics {
  double fnp = 0.0;
  double fdp = 0.0;
  std::size_t detections = 0;
};

/// FNP and FDP of a decision against ground truth; `changed` is looked up per pool item.
StepMetrics compute_metrics(const std::function<bool(ItemId)>& changed, const DecisionOutcome& outcome);

struct Replenishment {
  std::vector<ItemId> removed;
  std::vector<ItemId> added;
};

/// Removes detected items, restores the pool size and tops up never-exposed items to min_new_items.
Replenishment replenish(PoolState& pool, std::span<const ItemId> detected, const StudyConfig& config, Rng& rng);

struct MetricTrajectory {
  int replication = 0;
  std::uint64_t seed = 0;
  std::vector<double> fnp;
  std::vector<double> fdp;
  std::vector<std::size_t> detections;
  std::vector<double> realized_risk;   // V_n reported by detect
  std::vector<double> retained_risk;   // compound risk recomputed from retained scores
  std::vector<std::size_t> pool_size;  // |S_t| at decision time
};

/// Everything a downstream monitor needs to replay one administration.
struct StepTrace {
  std::int64_t time = 0;
  std::vector<ItemRecord> added;   // before this administration
  std::vector<ItemId> removed;     // before this administration
  std::vector<MonitorObservation> observations;  // Gaussian streams
  std::optional<ResponseMatrix> responses;       // IRT responses
  std::vector<ItemId> anchors;
  std::vector<ItemId> detected;
};

using TraceSink = std::function<void(const StepTrace&)>;

/// One replication; a pure function of (config, replication index).
MetricTrajectory run_replication(const StudyConfig& config, int replication, const TraceSink& sink = {});

/// All replications, fanned out over threads; results ordered by replication index.
std::vector<MetricTrajectory> run_study(const StudyConfig& config);

inline constexpr std::array<double, 5> kQuantileLevels{0.05, 0.25, 0.50, 0.75, 0.95};

struct QuantileRow {
  int t = 0;
  std::string metric;
  std::array<double, 5> q{};
};

/// Lower empirical quantile: the value at sorted index floor(p (n - 1)).
double lower_quantile(std::vector<double> values, double p);

/// Per-time quantile bands of fnp, fdp and detections, in that metric order.
std::vector<QuantileRow> aggregate_quantiles(std::span<const MetricTrajectory> trajectories);

}  // namespace seqmon
