#include "seqmon/change_core.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace seqmon {

namespace {

constexpr double kLogHalfTwoPi = 0.91893853320467274178;  // log(sqrt(2 pi))
const double kLogDensityFloor = std::log(kDensityFloor);
const double kLogSwitch = std::log(kLogSwitchThreshold);

// Trapezoid over [-60, 60]; wide enough for every unit-variance family used here.
double integrate_on_wide_grid(const std::function<double(double)>& density) {
  constexpr double lo = -60.0;
  constexpr double hi = 60.0;
  constexpr int n = 24000;
  const double h = (hi - lo) / n;
  double sum = 0.5 * (density(lo) + density(hi));
  for (int i = 1; i < n; ++i) sum += density(lo + i * h);
  return sum * h;
}

void require_normalized(const std::function<double(double)>& density, const char* which) {
  const double mass = integrate_on_wide_grid(density);
  if (!(std::abs(mass - 1.0) <= 1e-3))
    throw std::invalid_argument(std::string(which) + " density integrates to " + std::to_string(mass) +
                                ", expected 1");
}

struct Recursed {
  double u;
  double log1p_u;
};

// (1 + U) * exp(log_ratio) / (1 - rho), in linear form while it stays below the switch
// threshold and in log(1 + U) form beyond it.
Recursed shiryaev_step(double u, double log1p_u, double log_ratio, double rho) {
  if (u <= kLogSwitchThreshold) {
    const double next = (1.0 + u) * std::exp(log_ratio) / (1.0 - rho);
    if (std::isfinite(next) && next <= kLogSwitchThreshold) return {next, std::log1p(next)};
  }
  const double log_u = log1p_u + log_ratio - std::log1p(-rho);
  if (log_u <= kLogSwitch) {
    const double next = std::exp(log_u);
    return {next, std::log1p(next)};
  }
  const double log1p_next = log_u + std::log1p(std::exp(-log_u));
  return {log_u >= std::log(kUSaturation) ? kUSaturation : std::exp(log_u), log1p_next};
}

double posterior_from_log1p_u(double u, double log1p_u, double rho) {
  if (u <= kLogSwitchThreshold) return u / (u + 1.0 / rho);
  // log U ~= log(1 + U) here
  return 1.0 / (1.0 + std::exp(-log1p_u - std::log(rho)));
}

void check_rho(double rho, const char* what) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument(std::string(what) + " must lie in (0,1), got " + std::to_string(rho));
}

}  // namespace

double standard_normal_log_density(double x) { return -0.5 * x * x - kLogHalfTwoPi; }

GeometricPrior::GeometricPrior(double rho) : rho_(rho) { check_rho(rho, "rho"); }

DensityPair DensityPair::from_densities(std::function<double(double)> pre, std::function<double(double)> post) {
  require_normalized(pre, "pre-change");
  require_normalized(post, "post-change");
  return DensityPair([pre](double x) { return std::log(pre(x)); },
                     [post](double x) { return std::log(post(x)); });
}

DensityPair DensityPair::from_log_densities(LogDensity log_pre, LogDensity log_post, bool check_normalization) {
  if (check_normalization) {
    require_normalized([&](double x) { return std::exp(log_pre(x)); }, "pre-change");
    require_normalized([&](double x) { return std::exp(log_post(x)); }, "post-change");
  }
  return DensityPair(std::move(log_pre), std::move(log_post));
}

DensityPair DensityPair::gaussian_shift(double mu) {
  return DensityPair(standard_normal_log_density, [mu](double x) { return standard_normal_log_density(x - mu); });
}

double DensityPair::pre(double x) const { return std::exp(log_pre_(x)); }
double DensityPair::post(double x) const { return std::exp(log_post_(x)); }

DensityPair::Ratio DensityPair::log_likelihood_ratio(double x) const {
  const double lq = log_post_(x);
  const double lp = log_pre_(x);
  if (lp < kLogDensityFloor) {
    return {lq - kLogDensityFloor, lq > -std::numeric_limits<double>::infinity()};
  }
  return {lq - lp, false};
}

PostChangeFamily PostChangeFamily::gaussian_mean(std::function<double(double)> mean_of) {
  return PostChangeFamily(
      [mean_of = std::move(mean_of)](double x, double pi) { return standard_normal_log_density(x - mean_of(pi)); });
}

double PostChangeFamily::density_at(double x, double pi) const { return std::exp(log_density_(x, pi)); }

BoundedStreamState BoundedStreamState::fresh(ItemId id, const Eigen::VectorXd& pi_grid) {
  if (pi_grid.size() < 1) throw std::invalid_argument("parameter grid is empty");
  BoundedStreamState s;
  s.item_id = id;
  s.pi_grid = pi_grid;
  s.u_grid = Eigen::VectorXd::Zero(pi_grid.size());
  s.log1p_u_grid = Eigen::VectorXd::Zero(pi_grid.size());
  return s;
}

bool BoundedStreamState::operator==(const BoundedStreamState& o) const {
  return item_id == o.item_id && exposure_count == o.exposure_count && history_len == o.history_len &&
         degenerate_updates == o.degenerate_updates && u_grid == o.u_grid && log1p_u_grid == o.log1p_u_grid &&
         pi_grid == o.pi_grid;
}

StreamState update_shiryaev(StreamState state, std::optional<double> observed, const DensityPair& densities,
                            const GeometricPrior& prior) {
  ++state.history_len;
  if (!observed) return state;
  ++state.exposure_count;
  if (state.exposure_count <= 1) {
    state.u_stat = 0.0;
    state.log1p_u = 0.0;
    return state;
  }
  const auto ratio = densities.log_likelihood_ratio(*observed);
  if (ratio.clamped) ++state.degenerate_updates;
  const auto next = shiryaev_step(state.u_stat, state.log1p_u, ratio.log_value, prior.rho());
  state.u_stat = next.u;
  state.log1p_u = next.log1p_u;
  return state;
}

BoundedStreamState update_bounded(BoundedStreamState state, std::optional<double> observed,
                                  const DensityPair::LogDensity& log_pre, const PostChangeFamily& family,
                                  double rho_bar) {
  check_rho(rho_bar, "rho_bar");
  ++state.history_len;
  if (!observed) return state;
  ++state.exposure_count;
  if (state.exposure_count <= 1) {
    state.u_grid.setZero();
    state.log1p_u_grid.setZero();
    return state;
  }
  const double x = *observed;
  double lp = log_pre(x);
  bool clamped = false;
  if (lp < kLogDensityFloor) {
    lp = kLogDensityFloor;
    clamped = true;
  }
  for (Eigen::Index j = 0; j < state.pi_grid.size(); ++j) {
    const double lq = family.log_density_at(x, state.pi_grid[j]);
    const auto next = shiryaev_step(state.u_grid[j], state.log1p_u_grid[j], lq - lp, rho_bar);
    state.u_grid[j] = next.u;
    state.log1p_u_grid[j] = next.log1p_u;
  }
  if (clamped) ++state.degenerate_updates;
  return state;
}

double posterior_from_u(double u, const GeometricPrior& prior) {
  if (!(u >= 0.0)) throw std::invalid_argument("U must be nonnegative");
  return posterior_from_u<double>(u, prior.rho());
}

double posterior(const StreamState& state, const GeometricPrior& prior) {
  return posterior_from_log1p_u(state.u_stat, state.log1p_u, prior.rho());
}

double wbar(const BoundedStreamState& state, double rho_bar) {
  check_rho(rho_bar, "rho_bar");
  Eigen::Index arg = 0;
  if (state.u_grid.maxCoeff(&arg) <= kLogSwitchThreshold) return posterior_from_u<double>(state.u_grid[arg], rho_bar);
  state.log1p_u_grid.maxCoeff(&arg);
  return posterior_from_log1p_u(state.u_grid[arg], state.log1p_u_grid[arg], rho_bar);
}

double shiryaev_direct(std::span<const double> observations, const DensityPair& densities,
                       const GeometricPrior& prior) {
  const std::size_t e = observations.size();
  if (e <= 1) return 0.0;
  const double rho = prior.rho();
  double total = 0.0;
  // Change after the s-th exposure (s = 1..e-1, 1-based): product over r = s+1..e.
  for (std::size_t s = 1; s < e; ++s) {
    double prod = 1.0;
    for (std::size_t r = s; r < e; ++r) {
      const double p = std::max(densities.pre(observations[r]), kDensityFloor);
      prod *= densities.post(observations[r]) / p / (1.0 - rho);
    }
    total += prod;
  }
  return total;
}

double posterior_brute_force(std::span<const double> observations, const DensityPair& densities,
                             const GeometricPrior& prior) {
  const std::size_t e = observations.size();
  if (e > kBruteForceMaxLength)
    throw std::length_error("posterior_brute_force: at most 25 observations supported");
  if (e <= 1) return 0.0;
  const double rho = prior.rho();
  double changed = 0.0;
  for (std::size_t s = 1; s < e; ++s) {
    double joint = std::pow(1.0 - rho, static_cast<double>(s - 1)) * rho;
    for (std::size_t r = 0; r < s; ++r) joint *= densities.pre(observations[r]);
    for (std::size_t r = s; r < e; ++r) joint *= densities.post(observations[r]);
    changed += joint;
  }
  double unchanged = std::pow(1.0 - rho, static_cast<double>(e - 1));
  for (std::size_t r = 0; r < e; ++r) unchanged *= densities.pre(observations[r]);
  return changed / (changed + unchanged);
}

Eigen::VectorXd make_theta_grid(double lo, double hi, Eigen::Index n) {
  if (!(lo <= hi)) throw std::invalid_argument("theta interval must satisfy lo <= hi");
  if (n < 1) throw std::invalid_argument("theta grid needs at least one point");
  return Eigen::VectorXd::LinSpaced(n, lo, hi);
}

}  // namespace seqmon
