#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "colaudit/auditor.h"
#include "colaudit/market.h"
#include "colaudit/strategies.h"
#include "doctest.h"

using namespace colaudit;
using namespace colaudit::strategies;

namespace {

// An agent can only be built from what RoundContext and Observe hand it.
template <typename T>
concept SeesOpponentPrices = requires(T ctx) { ctx.opponent_prices; };
template <typename T>
concept SeesPrices = requires(T ctx) { ctx.prices; };
template <typename T>
concept SeesDemandCurve = requires(T ctx) { ctx.demand_curve; };
static_assert(!SeesOpponentPrices<RoundContext>);
static_assert(!SeesPrices<RoundContext>);
static_assert(!SeesDemandCurve<RoundContext>);
static_assert(std::is_same_v<decltype(&SellerAgent::Observe),
                             void (SellerAgent::*)(std::size_t, double)>);

bool ValidSimplex(const PriceDistribution& pi) {
  double total = 0.0;
  for (double p : pi.probs()) {
    if (!(p >= 0.0)) return false;
    total += p;
  }
  return std::abs(total - 1.0) <= 1e-9;
}

// Average realized profit of the best fixed price minus the realized profit
// of what was posted, with demand curves known to the test.
struct RegretTally {
  explicit RegretTally(std::vector<double> levels, double cost)
      : levels(std::move(levels)), cost(cost), fixed(this->levels.size(), 0.0) {}
  void Add(std::size_t posted, const std::vector<double>& curve) {
    for (std::size_t q = 0; q < levels.size(); ++q) {
      fixed[q] += (levels[q] - cost) * curve[q];
    }
    earned += (levels[posted] - cost) * curve[posted];
    ++rounds;
  }
  double External() const {
    return (*std::max_element(fixed.begin(), fixed.end()) - earned) / rounds;
  }
  std::vector<double> levels;
  double cost;
  std::vector<double> fixed;
  double earned = 0.0;
  double rounds = 0.0;
};

}  // namespace

TEST_CASE("price distributions") {
  CHECK(PriceDistribution::Uniform(4).Min() == 0.25);
  const auto pm = PriceDistribution::PointMass(3, 1);
  CHECK(pm[1] == 1.0);
  CHECK(pm.Min() == 0.0);
  CHECK_THROWS(PriceDistribution({0.5, -0.1, 0.6}));
  CHECK_THROWS(PriceDistribution({0.5, 0.2}));
}

TEST_CASE("fixed-price agent") {
  const market::PriceGrid g({0.3, 0.5, 0.7}, 0.0, 0.1);
  FixedPriceAgent a(g, 0.5);
  for (std::uint64_t t = 1; t <= 5; ++t) {
    const Decision d = a.Decide({t, {}});
    CHECK(d.price_index == 1);
    CHECK(d.reported == PriceDistribution::PointMass(3, 1));
    a.Observe(d.price_index, 0.4);
  }
  CHECK_THROWS_AS(FixedPriceAgent(g, 0.55), std::invalid_argument);
  auto [p1, p2] = CollusivePair(g, 0.5, 0.7);
  CHECK(p1->Decide({1, {}}).price_index == 1);
  CHECK(p2->Decide({1, {}}).price_index == 2);
}

TEST_CASE("private-signal colluder") {
  const market::PriceGrid g = market::PriceGrid::Uniform(0.0, 1.0, 101, 0.05, 0.15);
  PrivateSignalColluder a(g, 0.3, 0.66, 0.25);
  CHECK(a.Decide({1, market::kSignalLow}).price_index == 30);
  const Decision high = a.Decide({2, market::kSignalHigh});
  CHECK(high.price_index == 66);
  CHECK(high.reported[30] == 0.25);
  CHECK(high.reported[66] == 0.75);
  CHECK(ValidSimplex(high.reported));
  CHECK_THROWS_AS(a.Decide({3, std::nullopt}), std::logic_error);
  CHECK_THROWS_AS(PrivateSignalColluder(g, 0.305, 0.66, 0.25), std::invalid_argument);
}

TEST_CASE("stationary distribution examples") {
  const std::vector<double> identity = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const auto u = StationaryDistribution(identity, 3);
  for (double p : u.probs()) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-15));

  const std::vector<double> rows = {0.2, 0.5, 0.3, 0.2, 0.5, 0.3, 0.2, 0.5, 0.3};
  const auto r = StationaryDistribution(rows, 3);
  CHECK(r[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(r[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r[2] == doctest::Approx(0.3).epsilon(1e-12));

  const std::vector<double> two = {0.9, 0.1, 0.5, 0.5};
  const auto t = StationaryDistribution(two, 2);
  CHECK(t[0] == doctest::Approx(5.0 / 6).epsilon(1e-8));
  CHECK(t[1] == doctest::Approx(1.0 / 6).epsilon(1e-8));

  const std::vector<double> absorbing = {0, 1, 0, 0, 1, 0, 0, 1, 0};
  const auto a = StationaryDistribution(absorbing, 3);
  CHECK(a[1] == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<double> uniform(16, 0.25);
  const auto w = StationaryDistribution(uniform, 4);
  for (double p : w.probs()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("stationary distribution errors") {
  const std::vector<double> swap = {0, 1, 1, 0};
  const double start[] = {1.0, 0.0};
  CHECK_THROWS_AS(StationaryDistribution(swap, 2, {1e-10, 50}, start),
                  market::NonConvergenceError);
  CHECK_THROWS_AS(StationaryDistribution(std::vector<double>{0.5, 0.4, 0.5, 0.5}, 2),
                  std::invalid_argument);
}

TEST_CASE("stationary solution satisfies the balance equation") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + trial % 6;
    std::vector<double> q(k * k);
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < k; ++i) s += q[j * k + i] = u(gen);
      for (std::size_t i = 0; i < k; ++i) q[j * k + i] /= s;
    }
    const auto pi = StationaryDistribution(q, k);
    CHECK(ValidSimplex(pi));
    for (std::size_t i = 0; i < k; ++i) {
      double flow = 0.0;
      for (std::size_t j = 0; j < k; ++j) flow += pi[j] * q[j * k + i];
      CHECK(std::abs(flow - pi[i]) <= 1e-9);
    }
  }
}

TEST_CASE("exp3 on a single price") {
  const market::PriceGrid g({0.5}, 0.0, 0.1);
  Exp3Agent a(g, {0.1, 0.5}, {}, 1);
  for (std::uint64_t t = 1; t <= 100; ++t) {
    const Decision d = a.Decide({t, {}});
    CHECK(d.price_index == 0);
    CHECK(d.reported[0] == 1.0);
    a.Observe(0, 0.3);
  }
}

TEST_CASE("exp3 concentrates on a dominant price") {
  const market::PriceGrid g({0.2, 0.4, 0.6, 0.8}, 0.0, 0.1);
  const std::vector<double> demand = {0.3, 0.3, 0.9, 0.2};
  Exp3Agent a(g, {0.1, g.max_price()}, {}, 12);
  const std::uint64_t T = 50000;
  std::uint64_t hits = 0;
  for (std::uint64_t t = 1; t <= T; ++t) {
    const Decision d = a.Decide({t, {}});
    CHECK(ValidSimplex(d.reported));
    a.Observe(d.price_index, demand[d.price_index]);
    if (t > T - T / 10 && d.price_index == 2) ++hits;
  }
  CHECK(static_cast<double>(hits) / (T / 10) >= 0.9);
}

TEST_CASE("exp3 external regret against flipping demand") {
  const market::PriceGrid g({0.5, 1.0}, 0.0, 0.1);
  const std::vector<std::vector<double>> script = {{1.0, 0.0}, {0.0, 1.0}};
  Exp3Agent a(g, {0.0, 1.0}, {}, 5);
  RegretTally tally({0.5, 1.0}, 0.0);
  for (std::uint64_t t = 1; t <= 100000; ++t) {
    const auto& curve = script[t % 2];
    const Decision d = a.Decide({t, {}});
    a.Observe(d.price_index, curve[d.price_index]);
    tally.Add(d.price_index, curve);
  }
  CHECK(tally.External() <= 0.05);
}

TEST_CASE("calibrated learner starts uniform and stays on the simplex") {
  const market::PriceGrid g({0.2, 0.4, 0.6, 0.8, 1.0}, 0.0, 0.1);
  CalibratedAgent a(g, {0.1, 1.0}, 8);
  const auto first = a.NextDistribution({1, {}});
  for (double p : first.probs()) CHECK(p == doctest::Approx(0.2).epsilon(1e-12));
  for (std::uint64_t t = 1; t <= 2000; ++t) {
    const Decision d = a.Decide({t, {}});
    CHECK(ValidSimplex(d.reported));
    CHECK(d.reported[d.price_index] > 0.0);
    a.Observe(d.price_index, market::UniformDuopolyDemand(g.level(d.price_index), 0.55));
  }
  CHECK(a.solver_fallbacks() == 0);
  // The posted law is stationary for the current recommendation matrix.
  const auto pi = a.NextDistribution({2001, {}});
  const auto& q = a.recommendation_matrix();
  for (std::size_t i = 0; i < 5; ++i) {
    double flow = 0.0;
    for (std::size_t j = 0; j < 5; ++j) flow += pi[j] * q[j * 5 + i];
    CHECK(std::abs(flow - pi[i]) <= 1e-9);
  }
}

TEST_CASE("calibrated learner drives oracle calibrated regret down") {
  const market::PriceGrid g({0.3, 0.4, 0.5, 0.6, 0.7}, 0.1, 0.1);
  CalibratedAgent a(g, {0.1, g.max_price()}, 31);
  auditor::OracleLog log(g);
  std::vector<double> curve(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    curve[i] = market::UniformDuopolyDemand(g.level(i), 0.55);
  }
  std::vector<double> checkpoints;
  for (std::uint64_t t = 1; t <= 80000; ++t) {
    const Decision d = a.Decide({t, {}});
    a.Observe(d.price_index, curve[d.price_index]);
    log.Record(d.reported.probs(), d.price_index, curve);
    if (t == 5000 || t == 20000 || t == 80000) {
      log.Flush();
      const auto m = auditor::OracleMatrix(log, auditor::Weighting::kExpected);
      checkpoints.push_back(auditor::CalibratedRegretValue(m, 0.1));
    }
  }
  MESSAGE("calibrated regret at 5k/20k/80k: ", checkpoints[0], " ",
          checkpoints[1], " ", checkpoints[2]);
  CHECK(checkpoints[1] < checkpoints[0]);
  CHECK(checkpoints[2] < checkpoints[1]);
  CHECK(checkpoints[2] <= 0.02);
}

TEST_CASE("augmented agent mixture arithmetic") {
  const market::PriceGrid g({0.5, 1.0}, 0.0, 0.1);
  AugmentedAgent a(std::make_unique<FixedPriceAgent>(g, 0.5), 0.1, 3);
  std::uint64_t explored_high = 0;
  for (std::uint64_t t = 1; t <= 2000; ++t) {
    const Decision d = a.Decide({t, {}});
    CHECK(d.reported[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(d.reported[1] == 0.1);
    if (d.price_index == 1) ++explored_high;
    a.Observe(d.price_index, 0.5);
  }
  // Posting 1.0 happens only on exploration rounds that draw it: rate 0.1.
  CHECK(std::abs(explored_high / 2000.0 - 0.1) <= 4 * std::sqrt(0.09 / 2000));
  CHECK(a.rounds() == 2000);
  CHECK(a.inner_calls() + explored_high <= 2000);

  CHECK_THROWS_AS(AugmentedAgent(std::make_unique<FixedPriceAgent>(g, 0.5), 0.5, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(AugmentedAgent(std::make_unique<FixedPriceAgent>(g, 0.5), 0.6, 1),
                  std::invalid_argument);
}

TEST_CASE("augmented agent near the uniform boundary rarely calls inner") {
  const market::PriceGrid g({0.2, 0.4, 0.6, 0.8}, 0.0, 0.1);
  const double eps = 0.01;
  AugmentedAgent a(std::make_unique<FixedPriceAgent>(g, 0.4), 0.25 - eps, 6);
  const std::uint64_t T = 40000;
  for (std::uint64_t t = 1; t <= T; ++t) a.Observe(a.Decide({t, {}}).price_index, 0.1);
  const double rate = static_cast<double>(a.inner_calls()) / T;
  CHECK(std::abs(rate - eps * 4) <= 4 * std::sqrt(0.04 * 0.96 / T));
}

TEST_CASE("augmented floor holds exactly on every emitted distribution") {
  const market::PriceGrid g = market::PriceGrid::Uniform(0.1, 1.0, 10, 0.0, 0.2);
  AugmentedAgent a(std::make_unique<CalibratedAgent>(g, RewardScale{0.1, 1.0}, 4),
                   0.02, 9);
  double lowest = 1.0;
  for (std::uint64_t t = 1; t <= 1000; ++t) {
    const Decision d = a.Decide({t, {}});
    CHECK(ValidSimplex(d.reported));
    lowest = std::min(lowest, d.reported.Min());
    a.Observe(d.price_index, market::UniformDuopolyDemand(g.level(d.price_index), 0.5));
  }
  CHECK(lowest >= 0.02);

  AugmentedAgent fixed(std::make_unique<FixedPriceAgent>(g, 0.5), 0.02, 1);
  CHECK(fixed.Decide({1, {}}).reported.Min() == 0.02);
}

TEST_CASE("augmented run length to reach T inner calls") {
  const market::PriceGrid g({0.2, 0.4, 0.6, 0.8, 1.0}, 0.0, 0.1);
  const double floor = 0.05;
  const std::uint64_t T = 2000;
  const int reps = 200;
  std::vector<double> lengths;
  for (int r = 0; r < reps; ++r) {
    AugmentedAgent a(std::make_unique<FixedPriceAgent>(g, 0.6), floor, 1000 + r);
    std::uint64_t t = 0;
    while (a.inner_calls() < T) a.Observe(a.Decide({++t, {}}).price_index, 0.2);
    lengths.push_back(static_cast<double>(t));
  }
  const double q = 1.0 - 5 * floor;
  const double mean = std::accumulate(lengths.begin(), lengths.end(), 0.0) / reps;
  // Negative-binomial variance of the number of trials for T successes.
  const double se = std::sqrt(T * (1 - q) / (q * q) / reps);
  CHECK(std::abs(mean - T / q) <= 3 * se);
}

TEST_CASE("blackout robustness of the calibrated learner") {
  // Stochastic environment: Bernoulli sales against a fixed opponent. A
  // blackout run sees an independent half of the rounds; both runs are
  // scored on the rounds the learner actually played.
  const market::PriceGrid g({0.3, 0.4, 0.5, 0.6, 0.7}, 0.1, 0.1);
  std::vector<double> curve(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    curve[i] = market::UniformDuopolyDemand(g.level(i), 0.55);
  }
  const std::uint64_t calls = 20000;
  auto run = [&](std::uint64_t seed, bool blackout) {
    CalibratedAgent a(g, {0.1, g.max_price()}, seed);
    std::mt19937_64 env(seed ^ 0x5eed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auditor::OracleLog log(g);
    std::uint64_t n = 0;
    while (n < calls) {
      if (blackout && u(env) < 0.5) continue;
      const Decision d = a.Decide({++n, {}});
      const double sale = u(env) < curve[d.price_index] ? 1.0 : 0.0;
      a.Observe(d.price_index, sale);
      log.Record(d.reported.probs(), d.price_index, curve);
    }
    log.Flush();
    return auditor::CalibratedRegretValue(
        auditor::OracleMatrix(log, auditor::Weighting::kExpected), 0.1);
  };
  double full = 0.0, dark = 0.0;
  for (int s = 0; s < 20; ++s) {
    full += run(100 + s, false) / 20;
    dark += run(200 + s, true) / 20;
  }
  CHECK(std::abs(full - dark) <= 0.02);
}
