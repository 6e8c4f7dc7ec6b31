#include "seqmon/validate.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "seqmon/change_core.hpp"
#include "seqmon/compound_decision.hpp"
#include "seqmon/irt_sir.hpp"
#include "seqmon/rng.hpp"
#include "seqmon/sim_engine.hpp"

namespace seqmon {

namespace {

template <typename F>
CheckResult timed(std::string name, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  r.name = std::move(name);
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("threw: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

ItemParams2PL draw_params(Rng& rng) { return {uniform(rng, -2.0, 2.0), uniform(rng, 1.0, 1.5)}; }

std::vector<SimItem> pre_change_items(std::size_t n, Rng& rng, ItemId first_id) {
  std::vector<SimItem> items(n);
  for (std::size_t k = 0; k < n; ++k) {
    items[k].record.id = first_id + static_cast<ItemId>(k);
    items[k].record.beta = draw_params(rng);
  }
  return items;
}

ResponseMatrix simulate_responses(const std::vector<SimItem>& items, double m, int n, Rng& rng) {
  std::vector<const SimItem*> ptrs;
  for (const auto& s : items) ptrs.push_back(&s);
  const std::vector<std::uint8_t> pre(items.size(), 0);
  return gen_irt(ptrs, pre, PopulationModel{m}, n, rng);
}

}  // namespace

CheckResult check_shiryaev_oracles(int sequences, std::uint64_t seed) {
  return timed("shiryaev_recursion_oracles", [&](CheckResult& r) {
    Rng rng(seed, 1);
    double worst_rel = 0.0, worst_abs = 0.0;
    int failures = 0;
    for (int s = 0; s < sequences; ++s) {
      const double rho = uniform(rng, 0.01, 0.5);
      const double mu = uniform(rng, 0.25, 3.0);
      const auto length = 1 + static_cast<int>(uniform_index(rng, 12));
      const auto gamma = 1 + static_cast<int>(uniform_index(rng, 14));
      const GeometricPrior prior{rho};
      const DensityPair densities = DensityPair::gaussian_shift(mu);

      StreamState state;
      std::vector<double> observed;
      for (int i = 0; i < length; ++i) {
        if (uniform01(rng) < 0.2) {
          state = update_shiryaev(state, std::nullopt, densities, prior);
          continue;
        }
        const bool post = static_cast<int>(observed.size()) + 1 > gamma;
        const double x = standard_normal(rng) + (post ? mu : 0.0);
        observed.push_back(x);
        state = update_shiryaev(state, x, densities, prior);
      }
      const double direct = shiryaev_direct(observed, densities, prior);
      const double rel = direct == 0.0 ? std::abs(state.u_stat) : std::abs(state.u_stat - direct) / std::abs(direct);
      const double abs_err = std::abs(posterior(state, prior) - posterior_brute_force(observed, densities, prior));
      worst_rel = std::max(worst_rel, rel);
      worst_abs = std::max(worst_abs, abs_err);
      if (!(rel <= 1e-10 && abs_err <= 1e-8)) ++failures;
    }
    r.passed = failures == 0;
    r.detail = std::to_string(sequences) + " sequences, max rel err vs closed form " + fmt(worst_rel) +
               ", max abs err vs Bayes " + fmt(worst_abs);
  });
}

CheckResult check_detect_exhaustive(int pools, std::size_t max_pool, std::uint64_t seed) {
  return timed("detect_vs_exhaustive", [&](CheckResult& r) {
    Rng rng(seed, 2);
    int mismatches = 0, risk_violations = 0, cases = 0;
    for (int p = 0; p < pools; ++p) {
      const std::size_t n = 1 + uniform_index(rng, max_pool);
      const int flavour = static_cast<int>(uniform_index(rng, 4));
      std::vector<ScoredItem> items(n);
      for (std::size_t k = 0; k < n; ++k) {
        double w = uniform01(rng);
        if (flavour == 1) w = w * w * w * 0.1;              // mostly tiny scores
        if (flavour == 2) w = std::round(w * 20.0) / 20.0;  // ties, including 0 and 1
        if (flavour == 3 && uniform01(rng) < 0.3) w = 0.0;
        items[k] = {static_cast<ItemId>(100 - 3 * static_cast<int>(k)), w};
      }
      for (double alpha : {0.005, 0.01, 0.05}) {
        ++cases;
        const DecisionOutcome fast = detect(items, alpha);
        const DecisionOutcome slow = detect_exhaustive(items, alpha);
        if (fast.detected.size() != slow.detected.size()) ++mismatches;
        if (fast.realized_risk > alpha) ++risk_violations;
      }
    }
    r.passed = mismatches == 0 && risk_violations == 0;
    r.detail = std::to_string(cases) + " cases, " + std::to_string(mismatches) + " size mismatches, " +
               std::to_string(risk_violations) + " risk violations";
  });
}

CheckResult check_quadrature_mc(int param_draws, std::int64_t mc_draws, double z_bound, std::uint64_t seed) {
  return timed("quadrature_vs_monte_carlo", [&](CheckResult& r) {
    Rng rng(seed, 3);
    double worst_z = 0.0;
    int failures = 0;
    for (int d = 0; d < param_draws; ++d) {
      const ItemParams2PL item = draw_params(rng);
      const PopulationModel pop{uniform(rng, -0.5, 0.5)};
      Rng sampler(seed, 1000 + static_cast<std::uint64_t>(d));
      double sum = 0.0, sum_sq = 0.0;
      for (std::int64_t i = 0; i < mc_draws; ++i) {
        const double f = irf_2pl(pop.mean + standard_normal(sampler), item);
        sum += f;
        sum_sq += f * f;
      }
      const double n = static_cast<double>(mc_draws);
      const double mean = sum / n;
      const double se = std::sqrt(std::max(sum_sq / n - mean * mean, 0.0) / (n - 1.0));
      const double z = std::abs(expected_percent_correct(item, pop) - mean) / se;
      worst_z = std::max(worst_z, z);
      if (!(z <= z_bound)) ++failures;
    }
    r.passed = failures == 0;
    r.detail = std::to_string(param_draws) + " draws x " + std::to_string(mc_draws) + " samples, max |z| " + fmt(worst_z) +
               " (bound " + fmt(z_bound) + ")";
  });
}

CheckResult check_xi0_derivative(int param_draws, double tolerance, std::uint64_t seed) {
  return timed("xi0_derivative_vs_difference", [&](CheckResult& r) {
    Rng rng(seed, 4);
    constexpr double h = 1e-4;
    double worst = 0.0;
    for (int d = 0; d < param_draws; ++d) {
      const ItemParams2PL item = draw_params(rng);
      const double m = uniform(rng, -0.5, 0.5);
      const double fd = (expected_percent_correct(item, {m + h}) - expected_percent_correct(item, {m - h})) / (2.0 * h);
      worst = std::max(worst, std::abs(xi0_derivative(item, {m}) - fd));
    }
    r.passed = worst <= tolerance;
    r.detail = std::to_string(param_draws) + " draws, max abs err " + fmt(worst);
  });
}

CheckResult check_sir_calibration(int administrations, int examinees, std::uint64_t seed) {
  return timed("sir_null_calibration", [&](CheckResult& r) {
    Rng rng(seed, 5);
    constexpr std::size_t kAnchors = 5, kItems = 20;
    std::vector<double> xs;
    xs.reserve(static_cast<std::size_t>(administrations) * kItems);
    for (int a = 0; a < administrations; ++a) {
      const std::vector<SimItem> items = pre_change_items(kAnchors + kItems, rng, 1);
      const ResponseMatrix resp = simulate_responses(items, uniform(rng, -0.5, 0.5), examinees, rng);
      std::vector<ItemParams2PL> anchor_params;
      for (std::size_t k = 0; k < kAnchors; ++k) anchor_params.push_back(items[k].record.beta);
      const AnchorFit fit = fit_anchors(resp.entries.leftCols(kAnchors), anchor_params);
      for (std::size_t j = kAnchors; j < items.size(); ++j)
        xs.push_back(sir_statistic(resp.entries.col(static_cast<Eigen::Index>(j)), items[j].record.beta, fit).x_stat);
    }
    const Eigen::Map<const Eigen::ArrayXd> x(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const double mean = x.mean();
    const double var = (x - mean).square().sum() / static_cast<double>(x.size() - 1);
    r.passed = std::abs(mean) <= 0.05 && var >= 0.9 && var <= 1.1;
    r.detail = std::to_string(xs.size()) + " statistics, mean " + fmt(mean) + ", variance " + fmt(var);
  });
}

CheckResult check_mean_recovery(int replications, int examinees, std::uint64_t seed) {
  return timed("population_mean_recovery", [&](CheckResult& r) {
    Rng rng(seed, 6);
    constexpr std::size_t kAnchors = 5;
    int close = 0;
    double worst = 0.0;
    for (int rep = 0; rep < replications; ++rep) {
      const std::vector<SimItem> anchors = pre_change_items(kAnchors, rng, 1);
      const double m = uniform(rng, -0.5, 0.5);
      const ResponseMatrix resp = simulate_responses(anchors, m, examinees, rng);
      std::vector<ItemParams2PL> params;
      for (const auto& s : anchors) params.push_back(s.record.beta);
      const double err = std::abs(estimate_population_mean(resp.entries, params).m_hat - m);
      worst = std::max(worst, err);
      if (err < 0.1) ++close;
    }
    const double share = static_cast<double>(close) / replications;
    r.passed = share >= 0.95;
    r.detail = std::to_string(close) + "/" + std::to_string(replications) + " within 0.1, max error " + fmt(worst);
  });
}

CheckResult check_gaussian_generator(int draws, std::uint64_t seed) {
  return timed("gaussian_generator_moments", [&](CheckResult& r) {
    Rng rng(seed, 7);
    const std::vector<std::uint8_t> status{0, 0, 1};
    const std::vector<double> mus{1.0, 1.0, 1.5};
    auto moments = [&](double c) {
      double s0 = 0, s1 = 0, s01 = 0, s2 = 0;
      for (int i = 0; i < draws; ++i) {
        const auto x = gen_gaussian(status, mus, c, rng);
        s0 += x[0];
        s1 += x[1];
        s01 += x[0] * x[1];
        s2 += x[2];
      }
      const double n = draws;
      return std::pair{s01 / n - (s0 / n) * (s1 / n), s2 / n};
    };
    const auto [cov0, mean0] = moments(0.0);
    const auto [cov1, mean1] = moments(0.1);
    r.passed = std::abs(cov0) <= 0.01 && std::abs(cov1 - 0.1) <= 0.01 && std::abs(mean0 - 1.5) <= 0.02 &&
               std::abs(mean1 - 1.5) <= 0.02;
    r.detail = "cov(c=0) " + fmt(cov0) + ", cov(c=0.1) " + fmt(cov1) + ", post-change mean " + fmt(mean1);
  });
}

CheckResult check_philox_known_answers() {
  return timed("philox_known_answers", [](CheckResult& r) {
    struct Vector {
      Philox4x32::block_type ctr;
      std::array<std::uint32_t, 2> key;
      Philox4x32::block_type expected;
    };
    const Vector vectors[] = {
        {{0, 0, 0, 0}, {0, 0}, {0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}},
        {{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
         {0xffffffff, 0xffffffff},
         {0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}},
        {{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
         {0xa4093822, 0x299f31d0},
         {0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}},
    };
    int ok = 0;
    for (const auto& v : vectors) ok += Philox4x32::bijection(v.ctr, v.key) == v.expected;
    r.passed = ok == 3;
    r.detail = std::to_string(ok) + "/3 vectors match";
  });
}

std::vector<CheckResult> run_suite(std::string_view name) {
  constexpr std::uint64_t kSeed = 20201;
  // Two-sided 0.1% familywise level over 20 draws.
  constexpr double kFamilywiseZ = 4.06;
  const bool all = name == "all";
  if (!all && name != "oracles" && name != "calibration")
    throw std::invalid_argument("unknown suite '" + std::string(name) + "' (expected oracles, calibration or all)");
  std::vector<CheckResult> out;
  if (all || name == "oracles") {
    out.push_back(check_philox_known_answers());
    out.push_back(check_shiryaev_oracles(1000, kSeed));
    out.push_back(check_detect_exhaustive(500, 12, kSeed));
    out.push_back(check_quadrature_mc(20, 1'000'000, kFamilywiseZ, kSeed));
    out.push_back(check_xi0_derivative(20, 1e-6, kSeed));
  }
  if (all || name == "calibration") {
    out.push_back(check_gaussian_generator(100'000, kSeed));
    out.push_back(check_sir_calibration(100, 2000, kSeed));
    out.push_back(check_mean_recovery(50, 5000, kSeed));
  }
  return out;
}

}  // namespace seqmon
