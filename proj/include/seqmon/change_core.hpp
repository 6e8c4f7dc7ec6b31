#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include <Eigen/Dense>

namespace seqmon {

using ItemId = std::int64_t;

/// U values above this are carried in log(1 + U) form.
inline constexpr double kLogSwitchThreshold = 1e100;
/// Exposed U saturates here once it is carried in log form.
inline constexpr double kUSaturation = 1e308;
/// Pre-change densities are clamped below at this value before forming ratios.
inline constexpr double kDensityFloor = 1e-300;

/// Geometric prior on the number of exposures before a change: P(gamma = m) = (1-rho)^(m-1) rho.
class GeometricPrior {
public:
  explicit GeometricPrior(double rho);
  double rho() const { return rho_; }

private:
  double rho_;
};

/// Pre/post change densities, held as log-density handles.
class DensityPair {
public:
  using LogDensity = std::function<double(double)>;

  /// Wraps plain densities; both are checked to integrate to 1 within 1e-3.
  static DensityPair from_densities(std::function<double(double)> pre, std::function<double(double)> post);
  /// Same check as from_densities unless `check_normalization` is false.
  static DensityPair from_log_densities(LogDensity log_pre, LogDensity log_post,
                                        bool check_normalization = true);
  /// N(0,1) before the change, N(mu,1) after. Normalized by construction.
  static DensityPair gaussian_shift(double mu);

  double pre(double x) const;
  double post(double x) const;
  double log_pre(double x) const { return log_pre_(x); }
  double log_post(double x) const { return log_post_(x); }

  struct Ratio {
    double log_value;
    bool clamped;  // pre density fell below kDensityFloor while post was positive
  };
  /// log(q(x)/p(x)) with p clamped below at kDensityFloor.
  Ratio log_likelihood_ratio(double x) const;

private:
  DensityPair(LogDensity log_pre, LogDensity log_post)
      : log_pre_(std::move(log_pre)), log_post_(std::move(log_post)) {}
  LogDensity log_pre_;
  LogDensity log_post_;
};

/// Parametric post-change family h(x | pi).
class PostChangeFamily {
public:
  using LogDensity = std::function<double(double x, double pi)>;

  explicit PostChangeFamily(LogDensity log_density) : log_density_(std::move(log_density)) {}
  /// Unit-variance normal centred at mean_of(pi).
  static PostChangeFamily gaussian_mean(std::function<double(double)> mean_of);

  double log_density_at(double x, double pi) const { return log_density_(x, pi); }
  double density_at(double x, double pi) const;

private:
  LogDensity log_density_;
};

double standard_normal_log_density(double x);

/// Shiryaev statistic of one stream under a fully specified model.
struct StreamState {
  ItemId item_id = 0;
  std::int64_t exposure_count = 0;
  double u_stat = 0.0;   // exposed U, saturating at kUSaturation
  double log1p_u = 0.0;  // log(1 + U); authoritative once U > kLogSwitchThreshold
  std::int64_t history_len = 0;
  std::int64_t degenerate_updates = 0;

  bool operator==(const StreamState&) const = default;
};

/// One Shiryaev statistic per grid point of the post-change parameter.
struct BoundedStreamState {
  ItemId item_id = 0;
  std::int64_t exposure_count = 0;
  Eigen::VectorXd u_grid;
  Eigen::VectorXd log1p_u_grid;
  Eigen::VectorXd pi_grid;
  std::int64_t history_len = 0;
  std::int64_t degenerate_updates = 0;

  static BoundedStreamState fresh(ItemId id, const Eigen::VectorXd& pi_grid);
  bool operator==(const BoundedStreamState& o) const;
};

StreamState update_shiryaev(StreamState state, std::optional<double> observed, const DensityPair& densities,
                            const GeometricPrior& prior);

BoundedStreamState update_bounded(BoundedStreamState state, std::optional<double> observed,
                                  const DensityPair::LogDensity& log_pre, const PostChangeFamily& family,
                                  double rho_bar);

/// W = U / (U + 1/rho).
template <typename Scalar>
Scalar posterior_from_u(Scalar u, Scalar rho) {
  return u / (u + Scalar(1) / rho);
}

double posterior_from_u(double u, const GeometricPrior& prior);
/// Posterior of a stream, using the log form when U has overflowed the linear range.
double posterior(const StreamState& state, const GeometricPrior& prior);
/// Worst-case posterior over the grid: sup_j U_j transformed with rho_bar.
double wbar(const BoundedStreamState& state, double rho_bar);

/// Closed-form U as an explicit sum over change positions. Oracle for update_shiryaev.
double shiryaev_direct(std::span<const double> observations, const DensityPair& densities,
                       const GeometricPrior& prior);

inline constexpr std::size_t kBruteForceMaxLength = 25;
/// Posterior by direct Bayes enumeration over gamma. Oracle; refuses more than 25 observations.
double posterior_brute_force(std::span<const double> observations, const DensityPair& densities,
                             const GeometricPrior& prior);

/// `n` equally spaced points on [lo, hi], both endpoints included.
Eigen::VectorXd make_theta_grid(double lo, double hi, Eigen::Index n);

}  // namespace seqmon
