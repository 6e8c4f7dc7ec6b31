#include <doctest.h>

#include <algorithm>
#include <vector>

#include "seqmon/compound_decision.hpp"
#include "seqmon/rng.hpp"

using namespace seqmon;

namespace {

std::vector<ScoredItem> random_pool(Rng& rng, std::size_t n) {
  std::vector<ScoredItem> items(n);
  const int flavour = static_cast<int>(uniform_index(rng, 3));
  for (std::size_t k = 0; k < n; ++k) {
    double w = uniform01(rng);
    if (flavour == 1) w = 0.05 * w * w;
    if (flavour == 2) w = std::round(10.0 * w) / 10.0;
    items[k] = {static_cast<ItemId>(7 * k + 3), w};
  }
  return items;
}

std::vector<double> scores_of(const std::vector<ScoredItem>& items, const std::vector<ItemId>& ids) {
  std::vector<double> out;
  for (ItemId id : ids)
    out.push_back(std::find_if(items.begin(), items.end(), [&](const ScoredItem& s) { return s.item_id == id; })->score);
  return out;
}

}  // namespace

TEST_CASE("compound risk examples") {
  CHECK(compound_risk(std::vector<double>{0, 0, 0}) == 0.0);
  CHECK(compound_risk(std::vector<double>{}) == 0.0);
  CHECK(compound_risk(std::vector<double>{0.005, 0.015}) == doctest::Approx(0.01).epsilon(1e-15));
  Eigen::Array3d a(0.1, 0.2, 0.3);
  CHECK(compound_risk(a) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("detect: three-item hand example") {
  const std::vector<ScoredItem> items{{1, 0.005}, {2, 0.02}, {3, 0.5}};
  const auto out = detect(items, 0.01);
  CHECK(out.retained == std::vector<ItemId>{1});
  CHECK(out.detected == std::vector<ItemId>{2, 3});
  CHECK(out.cut_index == 1);
  CHECK(out.realized_risk == doctest::Approx(0.005));
  CHECK(detect_exhaustive(items, 0.01).detected.size() == 2);
}

TEST_CASE("detect: all-zero scores detect nothing; all-one scores detect everything") {
  const std::vector<ScoredItem> zeros{{1, 0.0}, {2, 0.0}, {3, 0.0}};
  CHECK(detect(zeros, 0.01).detected.empty());
  CHECK(detect_exhaustive(zeros, 0.01).detected.empty());
  const std::vector<ScoredItem> ones{{1, 1.0}, {2, 1.0}, {3, 1.0}};
  const auto out = detect(ones, 0.5);
  CHECK(out.detected == std::vector<ItemId>{1, 2, 3});
  CHECK(out.cut_index == 0);
  CHECK(out.realized_risk == 0.0);
  CHECK(detect(std::vector<ScoredItem>{}, 0.1).detected.empty());
}

TEST_CASE("detect rejects invalid input") {
  const std::vector<ScoredItem> ok{{1, 0.2}};
  CHECK_THROWS_AS(detect(ok, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(detect(ok, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(detect(std::vector<ScoredItem>{{1, 1.2}}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(detect(std::vector<ScoredItem>{{1, -0.1}}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(detect(std::vector<ScoredItem>{{1, 0.1}, {1, 0.2}}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(detect_exhaustive(std::vector<ScoredItem>(16, ScoredItem{0, 0.0}), 0.1), std::length_error);
}

TEST_CASE("ties at the cut are broken by ascending id") {
  const std::vector<ScoredItem> items{{9, 0.02}, {4, 0.02}, {6, 0.02}, {1, 0.0}};
  const auto out = detect(items, 0.01);
  // Retaining {1, 4} gives mean 0.01; a third 0.02 would exceed alpha.
  CHECK(out.retained == std::vector<ItemId>{1, 4});
  CHECK(out.detected == std::vector<ItemId>{6, 9});
}

TEST_CASE("detect matches the exhaustive oracle and respects alpha") {
  Rng rng(31, 0);
  for (int trial = 0; trial < 500; ++trial) {
    const auto items = random_pool(rng, 1 + uniform_index(rng, 10));
    for (double alpha : {0.005, 0.01, 0.05, 0.3}) {
      const auto fast = detect(items, alpha);
      const auto slow = detect_exhaustive(items, alpha);
      REQUIRE(fast.detected.size() == slow.detected.size());
      REQUIRE(compound_risk(scores_of(items, fast.retained)) <= alpha);
      REQUIRE(compound_risk(scores_of(items, slow.retained)) <= alpha);
      REQUIRE(fast.detected.size() + fast.retained.size() == items.size());
      REQUIRE(std::is_sorted(fast.detected.begin(), fast.detected.end()));
    }
  }
}

TEST_CASE("retained items carry the smallest scores") {
  Rng rng(32, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto items = random_pool(rng, 1 + uniform_index(rng, 30));
    const auto out = detect(items, 0.05);
    const auto kept = scores_of(items, out.retained);
    const auto gone = scores_of(items, out.detected);
    CHECK(std::is_sorted(kept.begin(), kept.end()));
    if (!kept.empty() && !gone.empty()) CHECK(kept.back() <= *std::min_element(gone.begin(), gone.end()));
    CHECK(out.cut_index == out.retained.size());
  }
}

TEST_CASE("smaller alpha never detects less") {
  Rng rng(33, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto items = random_pool(rng, 1 + uniform_index(rng, 40));
    const auto strict = detect(items, 0.005);
    const auto loose = detect(items, 0.05);
    CHECK(std::includes(strict.detected.begin(), strict.detected.end(), loose.detected.begin(), loose.detected.end()));
  }
}

TEST_CASE("input order does not change the detected set") {
  Rng rng(34, 0);
  for (int trial = 0; trial < 200; ++trial) {
    auto items = random_pool(rng, 2 + uniform_index(rng, 40));
    const auto before = detect(items, 0.02);
    for (std::size_t i = items.size() - 1; i > 0; --i) std::swap(items[i], items[uniform_index(rng, i + 1)]);
    const auto after = detect(items, 0.02);
    CHECK(before.detected == after.detected);
    CHECK(before.retained == after.retained);
  }
}

TEST_CASE("pointwise larger scores never shrink the detected set") {
  Rng rng(35, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto items = random_pool(rng, 1 + uniform_index(rng, 30));
    auto raised = items;
    for (auto& s : raised) s.score = std::min(1.0, s.score + uniform(rng, 0.0, 0.05));
    CHECK(detect(raised, 0.01).detected.size() >= detect(items, 0.01).detected.size());
  }
}

TEST_CASE("monitor config validation") {
  MonitorConfig c;
  CHECK_NOTHROW(c.validate());
  c.alpha = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = MonitorConfig{};
  c.rho_bar = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = MonitorConfig{};
  c.theta_lo = 0.2;
  c.theta_hi = 0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = MonitorConfig{};
  c.mode = ModelMode::bounded_model;
  c.theta_grid_size = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.theta_grid_size = 64;
  CHECK(c.theta_grid().size() == 64);
}

TEST_CASE("exact sum is correctly rounded and order independent") {
  auto sum_of = [](std::initializer_list<double> xs) {
    ExactSum s;
    for (double x : xs) s.add(x);
    return s.value();
  };
  CHECK(sum_of({}) == 0.0);
  CHECK(sum_of({0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}) == 1.0);
  CHECK(sum_of({1e100, 1.0, -1e100}) == 1.0);
  CHECK(sum_of({1.0, 1e-16, 1e-16}) == 1.0000000000000002);
  CHECK(sum_of({1e-16, 1.0, 1e-16}) == 1.0000000000000002);
  CHECK(sum_of({0.1, 0.4, 0.3, 0.4}) == sum_of({0.4, 0.4, 0.3, 0.1}));
}

TEST_CASE("ties on alpha are decided the same way whatever the summation order") {
  // Naive left-to-right sums of these put the mean on either side of 0.3 depending on order.
  std::vector<ScoredItem> items{{1, 0.7}, {2, 0.4}, {3, 0.6}, {4, 0.3}, {5, 0.1}, {6, 0.4}, {7, 0.8}};
  CHECK(compound_risk(std::vector<double>{0.1, 0.3, 0.4, 0.4}) == compound_risk(std::vector<double>{0.4, 0.4, 0.3, 0.1}));
  const auto reference = detect(items, 0.3);
  CHECK(reference.realized_risk <= 0.3);
  std::sort(items.begin(), items.end(), [](const ScoredItem& a, const ScoredItem& b) { return a.item_id < b.item_id; });
  do {
    CHECK(detect(items, 0.3).retained == reference.retained);
    CHECK(detect_exhaustive(items, 0.3).retained.size() == reference.retained.size());
  } while (std::next_permutation(items.begin(), items.begin() + 4,
                                 [](const ScoredItem& a, const ScoredItem& b) { return a.item_id < b.item_id; }));
}
