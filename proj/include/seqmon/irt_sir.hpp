#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "seqmon/change_core.hpp"
#include "seqmon/quadrature.hpp"

namespace seqmon {

/// 2PL item: P(correct | theta) = logistic(beta0 + beta1 * theta).
struct ItemParams2PL {
  double beta0 = 0.0;  // easiness
  double beta1 = 1.0;  // discrimination, > 0

  void validate() const {
    if (!(beta1 > 0.0) || !std::isfinite(beta0) || !std::isfinite(beta1))
      throw std::invalid_argument("2PL discrimination must be positive and parameters finite");
  }
  bool operator==(const ItemParams2PL&) const = default;
};

/// Ability distribution N(mean, 1) of one administration.
struct PopulationModel {
  double mean = 0.0;
};

/// Leakage proportion of a compromised item.
struct PreknowledgeModel {
  double pi = 0.0;
};

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using BinaryVector = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>;

/// Examinee-by-item 0/1 responses of one administration; columns labelled by item id.
struct ResponseMatrix {
  BinaryMatrix entries;
  std::vector<ItemId> item_ids;

  Eigen::Index n_examinees() const { return entries.rows(); }
  /// Column of `id`; throws std::out_of_range if absent.
  Eigen::Index column_of(ItemId id) const;
  /// Checks entries are 0/1 and the column labels match the matrix.
  void validate() const;
};

struct SirResult {
  double x_stat;
  double se;
  double xi0_hat;
  double m_hat;
};

/// Thrown when the anchor items carry no information about ability (kappa-hat ~ 0).
class DegenerateAnchorInformation : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// 2PL response function. Works elementwise on Eigen arrays as well as scalars.
template <typename T>
auto irf_2pl(const T& theta, const ItemParams2PL& item) {
  if constexpr (std::is_arithmetic_v<T>) {
    const double eta = item.beta0 + item.beta1 * theta;
    return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
  } else {
    return (item.beta0 + item.beta1 * theta.array()).unaryExpr([](double eta) {
      return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
    });
  }
}

/// xi0(m): expected percent correct under N(m,1) abilities.
double expected_percent_correct(const ItemParams2PL& item, const PopulationModel& pop,
                                const GaussHermiteRule& rule = default_quadrature());

/// d xi0 / dm = E[f(theta) (theta - m)].
double xi0_derivative(const ItemParams2PL& item, const PopulationModel& pop,
                      const GaussHermiteRule& rule = default_quadrature());

inline constexpr double kMeanSearchLo = -4.0;
inline constexpr double kMeanSearchHi = 4.0;

struct MeanEstimate {
  double m_hat;
  bool at_boundary;  // optimizer stopped at the edge of [-4, 4]
};

/// Marginal log-likelihood of the anchor responses (N x K) at population mean m.
double anchor_log_likelihood(const BinaryMatrix& anchor_responses, std::span<const ItemParams2PL> anchors, double m,
                             const GaussHermiteRule& rule = default_quadrature());

/// Marginal MLE of the ability mean from anchor responses (rows examinees, columns anchors).
MeanEstimate estimate_population_mean(const BinaryMatrix& anchor_responses, std::span<const ItemParams2PL> anchors,
                                      const GaussHermiteRule& rule = default_quadrature());

/// E[theta | anchor pattern] under N(m_hat, 1).
double posterior_ability_mean(const BinaryVector& pattern, std::span<const ItemParams2PL> anchors, double m_hat,
                              const GaussHermiteRule& rule = default_quadrature());

/// Per-administration quantities shared by every item's SIR statistic.
struct AnchorFit {
  double m_hat = 0.0;
  bool at_boundary = false;
  Eigen::VectorXd theta_bar_n;  // posterior ability mean per examinee
  double theta_bar = 0.0;
  double kappa_hat = 0.0;  // sample variance of theta_bar_n
};

inline constexpr double kKappaFloor = 1e-12;

AnchorFit fit_anchors(const BinaryMatrix& anchor_responses, std::span<const ItemParams2PL> anchors,
                      const GaussHermiteRule& rule = default_quadrature());

/// Standardized item residual of one item column, given the administration's anchor fit.
/// Throws DegenerateAnchorInformation when kappa-hat <= 1e-12 or the standard error vanishes.
SirResult sir_statistic(const BinaryVector& item_responses, const ItemParams2PL& item, const AnchorFit& anchors,
                        const GaussHermiteRule& rule = default_quadrature());

/// Convenience overload: fits the anchors from `responses` and scores `item_id`.
SirResult sir_statistic(ItemId item_id, const ResponseMatrix& responses, const ItemParams2PL& item,
                        std::span<const ItemId> anchor_ids, std::span<const ItemParams2PL> anchor_params);

/// Anchor columns of `responses` in the order of `anchor_ids`.
BinaryMatrix anchor_columns(const ResponseMatrix& responses, std::span<const ItemId> anchor_ids);

/// Mean shift of the SIR statistic under leakage proportion pi: pi (1 - xi0) / SE.
double post_change_mean(double pi, double xi0_hat, double se);

/// N(0,1) against N(post_change_mean(pi, ...), 1).
DensityPair post_change_density(double pi, double xi0_hat, double se);

/// h(x | pi) for pi ranging over the leakage interval.
PostChangeFamily post_change_family(double xi0_hat, double se);

}  // namespace seqmon
