#include "seqmon/irt_sir.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <string>

#include <boost/math/tools/minima.hpp>

namespace seqmon {

namespace {

// Log-likelihood of every examinee's anchor pattern at every quadrature node (N x J), nodes at m + z_j.
Eigen::MatrixXd pattern_log_likelihood(const BinaryMatrix& responses, std::span<const ItemParams2PL> anchors,
                                       double m, const GaussHermiteRule& rule) {
  const Eigen::Index k_items = static_cast<Eigen::Index>(anchors.size());
  const Eigen::Index j_nodes = rule.size();
  Eigen::MatrixXd log_correct(k_items, j_nodes);
  Eigen::MatrixXd log_wrong(k_items, j_nodes);
  for (Eigen::Index k = 0; k < k_items; ++k) {
    for (Eigen::Index j = 0; j < j_nodes; ++j) {
      const double eta = anchors[k].beta0 + anchors[k].beta1 * (m + rule.nodes[j]);
      log_correct(k, j) = -softplus(-eta);
      log_wrong(k, j) = -softplus(eta);
    }
  }
  Eigen::MatrixXd ll = responses.cast<double>() * (log_correct - log_wrong);
  ll.rowwise() += log_wrong.colwise().sum();
  return ll;
}

// Distinct anchor patterns with their multiplicities; the marginal likelihood only depends on these.
struct PatternTable {
  BinaryMatrix patterns;
  Eigen::VectorXd counts;
  std::vector<Eigen::Index> row_to_pattern;
};

PatternTable compress_patterns(const BinaryMatrix& responses) {
  std::map<std::vector<std::uint8_t>, Eigen::Index> index;
  std::vector<std::vector<std::uint8_t>> unique;
  std::vector<double> counts;
  PatternTable table;
  table.row_to_pattern.resize(static_cast<std::size_t>(responses.rows()));
  std::vector<std::uint8_t> key(static_cast<std::size_t>(responses.cols()));
  for (Eigen::Index n = 0; n < responses.rows(); ++n) {
    for (Eigen::Index k = 0; k < responses.cols(); ++k) key[static_cast<std::size_t>(k)] = responses(n, k);
    auto [it, inserted] = index.try_emplace(key, static_cast<Eigen::Index>(unique.size()));
    if (inserted) {
      unique.push_back(key);
      counts.push_back(0.0);
    }
    counts[static_cast<std::size_t>(it->second)] += 1.0;
    table.row_to_pattern[static_cast<std::size_t>(n)] = it->second;
  }
  table.patterns.resize(static_cast<Eigen::Index>(unique.size()), responses.cols());
  for (std::size_t u = 0; u < unique.size(); ++u)
    for (Eigen::Index k = 0; k < responses.cols(); ++k)
      table.patterns(static_cast<Eigen::Index>(u), k) = unique[u][static_cast<std::size_t>(k)];
  table.counts = Eigen::Map<const Eigen::VectorXd>(counts.data(), static_cast<Eigen::Index>(counts.size()));
  return table;
}

Eigen::RowVectorXd log_weights(const GaussHermiteRule& rule) { return rule.weights.array().log().transpose(); }

void check_anchor_inputs(const BinaryMatrix& responses, std::span<const ItemParams2PL> anchors) {
  if (anchors.empty()) throw std::invalid_argument("no anchor items");
  if (responses.cols() != static_cast<Eigen::Index>(anchors.size()))
    throw std::invalid_argument("anchor response columns do not match anchor parameters");
  if (responses.rows() < 1) throw std::invalid_argument("anchor responses contain no examinees");
  for (const auto& a : anchors) a.validate();
}

}  // namespace

Eigen::Index ResponseMatrix::column_of(ItemId id) const {
  const auto it = std::find(item_ids.begin(), item_ids.end(), id);
  if (it == item_ids.end()) throw std::out_of_range("item " + std::to_string(id) + " not in response matrix");
  return static_cast<Eigen::Index>(it - item_ids.begin());
}

void ResponseMatrix::validate() const {
  if (entries.cols() != static_cast<Eigen::Index>(item_ids.size()))
    throw std::invalid_argument("response matrix has " + std::to_string(entries.cols()) + " columns but " +
                                std::to_string(item_ids.size()) + " item ids");
  if (entries.rows() < 1) throw std::invalid_argument("response matrix has no examinees");
  if ((entries.array() > 1).any()) throw std::invalid_argument("response entries must be 0 or 1");
}

double expected_percent_correct(const ItemParams2PL& item, const PopulationModel& pop, const GaussHermiteRule& rule) {
  const Eigen::VectorXd theta = (rule.nodes.array() + pop.mean).matrix();
  return rule.weights.dot(irf_2pl(theta, item).matrix());
}

double xi0_derivative(const ItemParams2PL& item, const PopulationModel& pop, const GaussHermiteRule& rule) {
  const Eigen::VectorXd theta = (rule.nodes.array() + pop.mean).matrix();
  return (rule.weights.array() * irf_2pl(theta, item) * rule.nodes.array()).sum();
}

namespace {

double weighted_log_likelihood(const PatternTable& table, std::span<const ItemParams2PL> anchors, double m,
                               const GaussHermiteRule& rule) {
  Eigen::MatrixXd ll = pattern_log_likelihood(table.patterns, anchors, m, rule);
  ll.rowwise() += log_weights(rule);
  const Eigen::VectorXd row_max = ll.rowwise().maxCoeff();
  const Eigen::VectorXd lse = row_max.array() + (ll.colwise() - row_max).array().exp().rowwise().sum().log();
  return table.counts.dot(lse);
}

MeanEstimate maximize_likelihood(const PatternTable& table, std::span<const ItemParams2PL> anchors,
                                 const GaussHermiteRule& rule) {
  auto negative_ll = [&](double m) { return -weighted_log_likelihood(table, anchors, m, rule); };
  constexpr int kBits = std::numeric_limits<double>::digits / 2 + 1;
  std::uintmax_t max_iter = 200;
  const double m_hat =
      boost::math::tools::brent_find_minima(negative_ll, kMeanSearchLo, kMeanSearchHi, kBits, max_iter).first;
  const bool at_boundary = m_hat - kMeanSearchLo < 1e-6 || kMeanSearchHi - m_hat < 1e-6;
  return {m_hat, at_boundary};
}

}  // namespace

double anchor_log_likelihood(const BinaryMatrix& anchor_responses, std::span<const ItemParams2PL> anchors, double m,
                             const GaussHermiteRule& rule) {
  check_anchor_inputs(anchor_responses, anchors);
  return weighted_log_likelihood(compress_patterns(anchor_responses), anchors, m, rule);
}

MeanEstimate estimate_population_mean(const BinaryMatrix& anchor_responses, std::span<const ItemParams2PL> anchors,
                                      const GaussHermiteRule& rule) {
  check_anchor_inputs(anchor_responses, anchors);
  return maximize_likelihood(compress_patterns(anchor_responses), anchors, rule);
}

double posterior_ability_mean(const BinaryVector& pattern, std::span<const ItemParams2PL> anchors, double m_hat,
                              const GaussHermiteRule& rule) {
  if (pattern.size() != static_cast<Eigen::Index>(anchors.size()))
    throw std::invalid_argument("pattern length must equal anchor count");
  const BinaryMatrix row = pattern.transpose();
  check_anchor_inputs(row, anchors);
  Eigen::RowVectorXd ll = pattern_log_likelihood(row, anchors, m_hat, rule).row(0) + log_weights(rule);
  const Eigen::RowVectorXd w = (ll.array() - ll.maxCoeff()).exp();
  return w.dot((rule.nodes.array() + m_hat).matrix().transpose()) / w.sum();
}

AnchorFit fit_anchors(const BinaryMatrix& anchor_responses, std::span<const ItemParams2PL> anchors,
                      const GaussHermiteRule& rule) {
  check_anchor_inputs(anchor_responses, anchors);
  const PatternTable table = compress_patterns(anchor_responses);
  const MeanEstimate est = maximize_likelihood(table, anchors, rule);
  AnchorFit fit;
  fit.m_hat = est.m_hat;
  fit.at_boundary = est.at_boundary;

  Eigen::MatrixXd ll = pattern_log_likelihood(table.patterns, anchors, est.m_hat, rule);
  ll.rowwise() += log_weights(rule);
  const Eigen::VectorXd row_max = ll.rowwise().maxCoeff();
  const Eigen::MatrixXd post = (ll.colwise() - row_max).array().exp().matrix();
  const Eigen::VectorXd theta = (rule.nodes.array() + est.m_hat).matrix();
  const Eigen::VectorXd per_pattern = (post * theta).cwiseQuotient(post.rowwise().sum());
  fit.theta_bar_n.resize(anchor_responses.rows());
  for (Eigen::Index n = 0; n < anchor_responses.rows(); ++n)
    fit.theta_bar_n[n] = per_pattern[table.row_to_pattern[static_cast<std::size_t>(n)]];
  fit.theta_bar = fit.theta_bar_n.mean();
  fit.kappa_hat = (fit.theta_bar_n.array() - fit.theta_bar).square().mean();
  return fit;
}

SirResult sir_statistic(const BinaryVector& item_responses, const ItemParams2PL& item, const AnchorFit& anchors,
                        const GaussHermiteRule& rule) {
  item.validate();
  const Eigen::Index n = item_responses.size();
  if (n < 1) throw std::invalid_argument("item has no administered responses");
  if (anchors.theta_bar_n.size() != n)
    throw std::invalid_argument("item responses and anchor fit cover different examinees");
  if (!(anchors.kappa_hat > kKappaFloor))
    throw DegenerateAnchorInformation("anchor items carry no ability information (kappa-hat <= 1e-12)");

  const PopulationModel pop{anchors.m_hat};
  const double xi0 = expected_percent_correct(item, pop, rule);
  const double slope = xi0_derivative(item, pop, rule) / anchors.kappa_hat;
  const Eigen::ArrayXd y = item_responses.cast<double>().array();
  const double y_bar = y.mean();

  // Influence of examinee n on Ybar - xi0(m_hat): the item residual minus the
  // delta-method contribution of m_hat through the anchors.
  const Eigen::ArrayXd influence = (y - y_bar) - slope * (anchors.theta_bar_n.array() - anchors.theta_bar);
  const double se = std::sqrt(influence.square().sum()) / static_cast<double>(n);
  if (!(se > 0.0)) throw DegenerateAnchorInformation("SIR standard error is zero");
  return {(y_bar - xi0) / se, se, xi0, anchors.m_hat};
}

BinaryMatrix anchor_columns(const ResponseMatrix& responses, std::span<const ItemId> anchor_ids) {
  BinaryMatrix out(responses.n_examinees(), static_cast<Eigen::Index>(anchor_ids.size()));
  for (std::size_t k = 0; k < anchor_ids.size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) = responses.entries.col(responses.column_of(anchor_ids[k]));
  return out;
}

SirResult sir_statistic(ItemId item_id, const ResponseMatrix& responses, const ItemParams2PL& item,
                        std::span<const ItemId> anchor_ids, std::span<const ItemParams2PL> anchor_params) {
  responses.validate();
  const AnchorFit fit = fit_anchors(anchor_columns(responses, anchor_ids), anchor_params);
  return sir_statistic(responses.entries.col(responses.column_of(item_id)), item, fit);
}

double post_change_mean(double pi, double xi0_hat, double se) {
  if (!(se > 0.0)) throw std::invalid_argument("standard error must be positive");
  return pi * (1.0 - xi0_hat) / se;
}

DensityPair post_change_density(double pi, double xi0_hat, double se) {
  return DensityPair::gaussian_shift(post_change_mean(pi, xi0_hat, se));
}

PostChangeFamily post_change_family(double xi0_hat, double se) {
  if (!(se > 0.0)) throw std::invalid_argument("standard error must be positive");
  return PostChangeFamily::gaussian_mean([xi0_hat, se](double pi) { return pi * (1.0 - xi0_hat) / se; });
}

}  // namespace seqmon
