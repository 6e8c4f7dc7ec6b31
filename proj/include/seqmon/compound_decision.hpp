#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "seqmon/change_core.hpp"

namespace seqmon {

enum class ModelMode { known_model, bounded_model };

/// Risk threshold and, for the bounded model, the bounds rho <= rho_bar and pi in [theta_lo, theta_hi].
struct MonitorConfig {
  double alpha = 0.01;
  double rho_bar = 0.1;
  double theta_lo = 0.05;
  double theta_hi = 0.1;
  Eigen::Index theta_grid_size = 64;
  ModelMode mode = ModelMode::known_model;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  Eigen::VectorXd theta_grid() const { return make_theta_grid(theta_lo, theta_hi, theta_grid_size); }
  bool operator==(const MonitorConfig&) const = default;
};

struct ScoredItem {
  ItemId item_id;
  double score;  // W or W-bar, in [0,1]
};

struct DecisionOutcome {
  std::vector<ItemId> detected;  // ascending id
  std::vector<ItemId> retained;  // ascending score, ties by ascending id
  std::size_t cut_index = 0;
  double realized_risk = 0.0;
};

/// Exact running sum of doubles, read out correctly rounded. The result does not depend on the order of adds.
class ExactSum {
public:
  void add(double x);
  double value() const;

private:
  std::vector<double> partials_;
};

/// Mean of the retained posteriors, from the correctly rounded sum; 0 for an empty set.
double compound_risk(std::span<const double> retained_scores);

template <typename Derived>
double compound_risk(const Eigen::DenseBase<Derived>& retained_scores) {
  ExactSum sum;
  for (Eigen::Index i = 0; i < retained_scores.size(); ++i) sum.add(static_cast<double>(retained_scores.derived().coeff(i)));
  return retained_scores.size() == 0 ? 0.0 : sum.value() / static_cast<double>(retained_scores.size());
}

/// Smallest detection set whose retained compound risk is at most alpha, via the sorted-posterior cut.
/// Feeding worst-case posteriors gives the bounded-model rule unchanged.
DecisionOutcome detect(std::span<const ScoredItem> items, double alpha);

inline constexpr std::size_t kExhaustiveMaxItems = 15;
/// Brute-force minimum-cardinality solver over all 2^n subsets. Oracle for detect; refuses n > 15.
DecisionOutcome detect_exhaustive(std::span<const ScoredItem> items, double alpha);

}  // namespace seqmon
