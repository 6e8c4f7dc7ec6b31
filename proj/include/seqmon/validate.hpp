#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace seqmon {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Recursive Shiryaev update against the closed-form sum (relative 1e-10) and Bayes enumeration (absolute 1e-8)
/// on random sequences of length at most 12, with gaps.
CheckResult check_shiryaev_oracles(int sequences, std::uint64_t seed);

/// detect against detect_exhaustive: equal detection-set size for every alpha in {0.005, 0.01, 0.05}.
CheckResult check_detect_exhaustive(int pools, std::size_t max_pool, std::uint64_t seed);

/// Quadrature xi0 against a Monte Carlo mean within `z_bound` standard errors, on `param_draws` random
/// items/populations. Each draw samples from its own stream.
CheckResult check_quadrature_mc(int param_draws, std::int64_t mc_draws, double z_bound, std::uint64_t seed);

/// Analytic xi0' against a central finite difference, within `tolerance`.
CheckResult check_xi0_derivative(int param_draws, double tolerance, std::uint64_t seed);

/// SIR statistics of pre-change items: sample mean within 0.05 of 0 and variance in [0.9, 1.1].
CheckResult check_sir_calibration(int administrations, int examinees, std::uint64_t seed);

/// |m_hat - m| < 0.1 in at least 95% of replications.
CheckResult check_mean_recovery(int replications, int examinees, std::uint64_t seed);

/// Shared-factor generator: pairwise covariance c within 0.01 and post-change mean within 0.02.
CheckResult check_gaussian_generator(int draws, std::uint64_t seed);

/// Philox4x32-10 known-answer vectors.
CheckResult check_philox_known_answers();

/// Runs `oracles`, `calibration` or `all`; throws std::invalid_argument on any other name.
std::vector<CheckResult> run_suite(std::string_view name);

}  // namespace seqmon
