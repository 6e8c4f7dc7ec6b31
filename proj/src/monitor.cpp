#include "seqmon/monitor.hpp"

#include <stdexcept>
#include <string>
#include <unordered_map>

namespace seqmon {

Monitor::Monitor(MonitorConfig config, StatisticKind kind) : config_(config), kind_(kind) {
  config_.validate();
  grid_ = config_.theta_grid();
}

void Monitor::add_item(const ItemRecord& record) {
  if (items_.contains(record.id)) throw std::invalid_argument("item " + std::to_string(record.id) + " already in pool");
  if (config_.mode == ModelMode::known_model) (void)GeometricPrior{record.rho};
  if (kind_ == StatisticKind::sir) record.beta.validate();
  Tracked t;
  t.record = record;
  t.known.item_id = record.id;
  if (config_.mode == ModelMode::bounded_model) t.bounded = BoundedStreamState::fresh(record.id, grid_);
  items_.emplace(record.id, std::move(t));
}

void Monitor::remove_item(ItemId id) {
  if (items_.erase(id) == 0) throw std::out_of_range("item " + std::to_string(id) + " not in pool");
}

void Monitor::restore(Tracked tracked) {
  const ItemId id = tracked.record.id;
  if (!items_.emplace(id, std::move(tracked)).second)
    throw std::invalid_argument("item " + std::to_string(id) + " restored twice");
}

double Monitor::score(ItemId id) const {
  const auto& t = items_.at(id);
  if (config_.mode == ModelMode::known_model) return posterior(t.known, GeometricPrior{t.record.rho});
  return wbar(t.bounded, config_.rho_bar);
}

std::vector<ScoredItem> Monitor::scores() const {
  std::vector<ScoredItem> out;
  out.reserve(items_.size());
  for (const auto& [id, t] : items_) out.push_back({id, score(id)});
  return out;
}

StepReport Monitor::step(std::span<const MonitorObservation> observations, std::optional<double> alpha_override) {
  std::unordered_map<ItemId, const MonitorObservation*> observed;
  observed.reserve(observations.size());
  for (const auto& obs : observations) {
    if (!items_.contains(obs.item_id))
      throw std::out_of_range("observation for unknown item " + std::to_string(obs.item_id));
    if (!observed.emplace(obs.item_id, &obs).second)
      throw std::invalid_argument("item " + std::to_string(obs.item_id) + " observed twice in one administration");
    if (kind_ == StatisticKind::sir && !(obs.se > 0.0))
      throw std::invalid_argument("SIR observation for item " + std::to_string(obs.item_id) + " lacks a standard error");
  }

  ++time_;
  for (auto& [id, t] : items_) {
    const auto it = observed.find(id);
    std::optional<double> x;
    if (it != observed.end()) x = it->second->x;

    if (config_.mode == ModelMode::known_model) {
      const GeometricPrior prior{t.record.rho};
      if (!x) {
        static const DensityPair unused = DensityPair::gaussian_shift(0.0);
        t.known = update_shiryaev(std::move(t.known), std::nullopt, unused, prior);
        continue;
      }
      const DensityPair densities = kind_ == StatisticKind::gaussian_shift
                                        ? DensityPair::gaussian_shift(t.record.mu)
                                        : post_change_density(t.record.pi, it->second->xi0_hat, it->second->se);
      t.known = update_shiryaev(std::move(t.known), x, densities, prior);
    } else {
      static const PostChangeFamily shift_family = PostChangeFamily::gaussian_mean([](double mu) { return mu; });
      if (!x) {
        t.bounded = update_bounded(std::move(t.bounded), std::nullopt, standard_normal_log_density, shift_family,
                                   config_.rho_bar);
        continue;
      }
      const PostChangeFamily family = kind_ == StatisticKind::gaussian_shift
                                          ? shift_family
                                          : post_change_family(it->second->xi0_hat, it->second->se);
      t.bounded = update_bounded(std::move(t.bounded), x, standard_normal_log_density, family, config_.rho_bar);
    }
  }

  StepReport report;
  report.time = time_;
  report.scores = scores();
  report.decision = detect(report.scores, alpha_override.value_or(config_.alpha));
  report.observations.assign(observations.begin(), observations.end());
  return report;
}

StepReport Monitor::step_responses(const ResponseMatrix& responses, std::span<const ItemId> anchor_ids,
                                   std::optional<double> alpha_override) {
  if (kind_ != StatisticKind::sir) throw std::logic_error("response batches need a SIR monitor");
  responses.validate();
  if (anchor_ids.empty()) throw std::invalid_argument("no anchor items");
  std::vector<ItemParams2PL> anchor_params;
  anchor_params.reserve(anchor_ids.size());
  for (ItemId id : anchor_ids) {
    const auto it = items_.find(id);
    if (it == items_.end()) throw std::out_of_range("anchor " + std::to_string(id) + " not in pool");
    anchor_params.push_back(it->second.record.beta);
  }
  const AnchorFit fit = fit_anchors(anchor_columns(responses, anchor_ids), anchor_params);

  std::vector<MonitorObservation> observations;
  observations.reserve(responses.item_ids.size());
  for (Eigen::Index c = 0; c < responses.entries.cols(); ++c) {
    const ItemId id = responses.item_ids[static_cast<std::size_t>(c)];
    const auto it = items_.find(id);
    if (it == items_.end()) throw std::out_of_range("responses for unknown item " + std::to_string(id));
    const SirResult sir = sir_statistic(responses.entries.col(c), it->second.record.beta, fit);
    observations.push_back({id, sir.x_stat, sir.xi0_hat, sir.se});
  }
  StepReport report = step(observations, alpha_override);
  report.m_hat = fit.m_hat;
  report.m_hat_at_boundary = fit.at_boundary;
  return report;
}

}  // namespace seqmon
