#include "seqmon/compound_decision.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>

namespace seqmon {

namespace {

void check_inputs(std::span<const ScoredItem> items, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  std::unordered_set<ItemId> seen;
  seen.reserve(items.size());
  for (const auto& item : items) {
    if (!(item.score >= 0.0 && item.score <= 1.0))
      throw std::invalid_argument("score of item " + std::to_string(item.item_id) + " outside [0,1]");
    if (!seen.insert(item.item_id).second)
      throw std::invalid_argument("duplicate item id " + std::to_string(item.item_id));
  }
}

bool score_then_id(const ScoredItem& a, const ScoredItem& b) {
  return a.score < b.score || (a.score == b.score && a.item_id < b.item_id);
}

}  // namespace

void MonitorConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  if (!(rho_bar > 0.0 && rho_bar < 1.0)) throw std::invalid_argument("rho_bar must lie in (0,1)");
  if (!(theta_lo <= theta_hi)) throw std::invalid_argument("theta_lo must not exceed theta_hi");
  if (mode == ModelMode::bounded_model && theta_grid_size < 2)
    throw std::invalid_argument("theta_grid_size must be at least 2 in bounded mode");
  if (theta_grid_size < 1) throw std::invalid_argument("theta_grid_size must be positive");
}

void ExactSum::add(double x) {
  // Shewchuk's grow-expansion: partials stay nonoverlapping and in increasing magnitude.
  std::size_t kept = 0;
  for (double y : partials_) {
    if (std::abs(x) < std::abs(y)) std::swap(x, y);
    const double hi = x + y;
    const double lo = y - (hi - x);
    if (lo != 0.0) partials_[kept++] = lo;
    x = hi;
  }
  partials_.resize(kept);
  partials_.push_back(x);
}

double ExactSum::value() const {
  std::size_t n = partials_.size();
  if (n == 0) return 0.0;
  double hi = partials_[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials_[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  // Round-half-even correction when the remaining partials push past a halfway point.
  if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
    const double y = 2.0 * lo;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

double compound_risk(std::span<const double> retained_scores) {
  if (retained_scores.empty()) return 0.0;
  ExactSum sum;
  for (double w : retained_scores) sum.add(w);
  return sum.value() / static_cast<double>(retained_scores.size());
}

DecisionOutcome detect(std::span<const ScoredItem> items, double alpha) {
  check_inputs(items, alpha);
  std::vector<ScoredItem> sorted(items.begin(), items.end());
  std::sort(sorted.begin(), sorted.end(), score_then_id);

  // V_n is nondecreasing in n for sorted scores, but scan all n to take the largest feasible one.
  DecisionOutcome out;
  ExactSum prefix;
  for (std::size_t n = 1; n <= sorted.size(); ++n) {
    prefix.add(sorted[n - 1].score);
    const double v = prefix.value() / static_cast<double>(n);
    if (v <= alpha) {
      out.cut_index = n;
      out.realized_risk = v;
    }
  }
  out.retained.reserve(out.cut_index);
  for (std::size_t i = 0; i < out.cut_index; ++i) out.retained.push_back(sorted[i].item_id);
  out.detected.reserve(sorted.size() - out.cut_index);
  for (std::size_t i = out.cut_index; i < sorted.size(); ++i) out.detected.push_back(sorted[i].item_id);
  std::sort(out.detected.begin(), out.detected.end());
  return out;
}

DecisionOutcome detect_exhaustive(std::span<const ScoredItem> items, double alpha) {
  if (items.size() > kExhaustiveMaxItems) throw std::length_error("detect_exhaustive: pool larger than 15 items");
  check_inputs(items, alpha);
  const std::size_t n = items.size();
  std::uint32_t best_mask = 0;
  int best_size = 0;
  double best_risk = 0.0;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    const int size = std::popcount(mask);
    if (size <= best_size) continue;
    ExactSum sum;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) sum.add(items[i].score);
    const double risk = sum.value() / size;
    if (risk <= alpha) {
      best_mask = mask;
      best_size = size;
      best_risk = risk;
    }
  }
  DecisionOutcome out;
  out.cut_index = static_cast<std::size_t>(best_size);
  out.realized_risk = best_risk;
  for (std::size_t i = 0; i < n; ++i)
    ((best_mask & (1u << i)) ? out.retained : out.detected).push_back(items[i].item_id);
  std::sort(out.detected.begin(), out.detected.end());
  return out;
}

}  // namespace seqmon
