#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "seqmon/change_core.hpp"
#include "seqmon/compound_decision.hpp"
#include "seqmon/irt_sir.hpp"

namespace seqmon {

/// How the post-change density of an observed statistic is formed.
enum class StatisticKind {
  gaussian_shift,  // N(0,1) -> N(mu,1); mu known per item, or mu in Theta when bounded
  sir,             // SIR statistic; post-change mean pi (1 - xi0_hat) / SE
};

/// Registry entry: everything the monitor knows about an item's change model.
struct ItemRecord {
  ItemId id = 0;
  double rho = 0.05;  // geometric prior (known-model mode)
  double mu = 1.0;    // post-change mean (gaussian_shift, known-model mode)
  ItemParams2PL beta;  // 2PL parameters (sir)
  double pi = 0.0;     // leakage proportion (sir, known-model mode)

  bool operator==(const ItemRecord&) const = default;
};

/// One observed statistic; xi0_hat and se are needed only for SIR statistics.
struct MonitorObservation {
  ItemId item_id = 0;
  double x = 0.0;
  double xi0_hat = 0.0;
  double se = 0.0;
};

struct StepReport {
  std::int64_t time = 0;
  std::vector<ScoredItem> scores;  // every pool item, ascending id
  DecisionOutcome decision;
  std::optional<double> m_hat;     // response batches only
  bool m_hat_at_boundary = false;
  std::vector<MonitorObservation> observations;  // statistics that entered the update
};

/// Multi-stream monitor: per-item Shiryaev states plus the compound detection rule.
class Monitor {
public:
  struct Tracked {
    ItemRecord record;
    StreamState known;
    BoundedStreamState bounded;
  };

  Monitor(MonitorConfig config, StatisticKind kind);

  const MonitorConfig& config() const { return config_; }
  StatisticKind kind() const { return kind_; }
  std::int64_t time() const { return time_; }
  const std::map<ItemId, Tracked>& items() const { return items_; }
  bool contains(ItemId id) const { return items_.contains(id); }

  /// Throws std::invalid_argument on a duplicate id.
  void add_item(const ItemRecord& record);
  /// Throws std::out_of_range on an unknown id.
  void remove_item(ItemId id);

  /// Advances every pool item one administration; items without an observation keep their statistic.
  /// `alpha_override` replaces the configured threshold for this step only.
  StepReport step(std::span<const MonitorObservation> observations,
                  std::optional<double> alpha_override = std::nullopt);

  /// Response-mode step: fits the anchors, forms every column's SIR statistic and then calls step().
  StepReport step_responses(const ResponseMatrix& responses, std::span<const ItemId> anchor_ids,
                            std::optional<double> alpha_override = std::nullopt);

  double score(ItemId id) const;
  std::vector<ScoredItem> scores() const;

  /// Restores a persisted item with its state, for snapshot loading.
  void restore(Tracked tracked);
  void set_time(std::int64_t t) { time_ = t; }

private:
  MonitorConfig config_;
  StatisticKind kind_;
  Eigen::VectorXd grid_;
  std::map<ItemId, Tracked> items_;
  std::int64_t time_ = 0;
};

}  // namespace seqmon
