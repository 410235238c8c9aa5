// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "colaudit/auditor.h"
#include "colaudit/harness.h"
#include "colaudit/market.h"
#include "colaudit/transcript.h"

namespace {

using namespace colaudit;
using transcript::Transcript;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Scenario(const std::string& name) {
  return std::string(COLAUDIT_SOURCE_DIR) + "/scenarios/" + name;
}

std::string Fmt(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

double Mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double StdErr(const std::vector<double>& v) {
  const double m = Mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) /
                   static_cast<double>(v.size()));
}

// 1. Best-response iteration on a fine grid.
Outcome Equilibrium() {
  const auto grid = market::PriceGrid::Uniform(0.0, 1.0, 1001, 0.0, 1.0);
  const auto eq = market::FixedPriceEquilibrium(
      grid, 0.1, 0.2, market::UniformDuopolyDemand, {1.0, 1.0});
  const bool ok = std::abs(eq.p1 - 0.50) <= 0.01 && std::abs(eq.p2 - 0.55) <= 0.01;
  return {ok, Fmt("prices (%.3f, %.3f) after %d iterations", eq.p1, eq.p2,
                  eq.iterations)};
}

// 2. Supra-competitive pair beats the equilibrium in total profit.
Outcome Dominance() {
  const auto grid = market::PriceGrid::Uniform(0.0, 1.0, 1001, 0.0, 1.0);
  const auto eq = market::FixedPriceEquilibrium(
      grid, 0.1, 0.2, market::UniformDuopolyDemand, {1.0, 1.0});
  const double high = market::DuopolyTotalProfit(0.60, 0.66, 0.1, 0.2);
  const double base = market::DuopolyTotalProfit(eq.p1, eq.p2, 0.1, 0.2);
  return {high > base, Fmt("total profit %.6f at (0.60, 0.66) vs %.6f at equilibrium",
                           high, base)};
}

// 3. External regret small, calibrated regret large, 0.66 -> 0.60 profitable.
Outcome Separation() {
  const harness::Scenario s = harness::LoadScenario(Scenario("private_signal.json"));
  const auto run = harness::SimulateReplication(s, 0);
  const auto& seller = run.sellers[0];
  const auto oracle = auditor::ComputeOracleRegrets(
      seller.oracle, seller.cost, s.grid.cost_lo(), s.grid.cost_hi());
  const std::size_t from = s.grid.RequireIndex(0.66);
  const std::size_t to = s.grid.RequireIndex(0.60);
  const auto& remap = oracle.hindsight_remaps.at(from);
  const bool listed = std::find(remap.profitable.begin(), remap.profitable.end(),
                                to) != remap.profitable.end();
  const bool ok = oracle.hindsight_external <= 0.005 &&
                  oracle.hindsight_calibrated >= 0.005 && listed;
  return {ok, Fmt("T=%llu external %.6f calibrated %.6f; 0.66->0.60 %s "
                  "(row argmax %.2f gain %.6f)",
                  static_cast<unsigned long long>(run.rounds),
                  oracle.hindsight_external, oracle.hindsight_calibrated,
                  listed ? "profitable" : "missing", s.grid.level(remap.to),
                  remap.gain)};
}

// 4. Propensity estimates average to the true demand.
Outcome Unbiasedness() {
  std::mt19937_64 gen(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  constexpr int kDraws = 100000;
  int checks = 0, failures = 0;
  double worst = 0.0;
  for (int fixture = 0; fixture < 20; ++fixture) {
    const std::size_t k = 2 + fixture % 4;
    std::vector<double> pi(k), x(k), levels(k);
    double total = 0.0;
    for (auto& p : pi) total += p = 0.05 + u(gen);
    for (auto& p : pi) p /= total;
    for (std::size_t i = 0; i < k; ++i) {
      x[i] = u(gen);
      levels[i] = 0.1 * static_cast<double>(i + 1);
    }
    Transcript tr(market::PriceGrid(levels, 0.0, 0.1));
    std::discrete_distribution<std::size_t> pick(pi.begin(), pi.end());
    std::vector<double> sum(k, 0.0);
    for (int d = 0; d < kDraws; ++d) {
      const std::size_t posted = pick(gen);
      Transcript one(tr.grid());
      one.Append(pi, posted, x[posted]);
      for (std::size_t p = 0; p < k; ++p) {
        sum[p] += auditor::PropensityEstimate(one.round(0), p);
      }
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double mean = sum[p] / kDraws;
      const double se = x[p] * std::sqrt((1.0 - pi[p]) / pi[p] / kDraws);
      const double z = se > 0.0 ? std::abs(mean - x[p]) / se : 0.0;
      worst = std::max(worst, z);
      ++checks;
      failures += z > 3.0;
    }
  }
  const double expected = checks * std::erfc(3.0 / std::sqrt(2.0));
  return {failures == 0,
          Fmt("%d level checks, %d outside 3 SE (%.2f expected by chance), worst |z| %.2f",
              checks, failures, expected, worst)};
}

Transcript RandomTranscript(std::mt19937_64& gen, std::size_t k, std::size_t T) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> levels(k);
  double acc = 0.0;
  for (auto& l : levels) l = acc += 0.05 + 0.25 * u(gen);
  Transcript tr(market::PriceGrid(levels, 0.0, levels.back()));
  std::vector<double> pi(k);
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (auto& p : pi) s += p = u(gen) + 0.01;
    for (auto& p : pi) p /= s;
    std::discrete_distribution<std::size_t> pick(pi.begin(), pi.end());
    tr.Append(pi, pick(gen), u(gen));
  }
  return tr;
}

// Row-by-row affine coefficients straight from the per-round definition.
struct Affine {
  std::vector<double> a, b;
};

Affine DefinitionEntries(const Transcript& tr) {
  const std::size_t k = tr.k();
  const auto levels = tr.grid().levels();
  Affine e{std::vector<double>(k * k, 0.0), std::vector<double>(k * k, 0.0)};
  const double T = static_cast<double>(tr.size());
  for (std::size_t t = 0; t < tr.size(); ++t) {
    const auto r = tr.round(t);
    const std::size_t s = r.price_index;
    const double xhat = r.observed_demand / r.pi[s];
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t q = 0; q < k; ++q) {
        // pi(p) [(q - c) xhat(q) - (p - c) xhat(p)], xhat zero off the posted level.
        const double xq = q == s ? xhat : 0.0, xp = p == s ? xhat : 0.0;
        e.a[p * k + q] += r.pi[p] * (levels[q] * xq - levels[p] * xp) / T;
        e.b[p * k + q] += r.pi[p] * (xp - xq) / T;
      }
    }
  }
  return e;
}

double EnumerateRemaps(const Affine& e, std::size_t k, double c) {
  std::vector<std::size_t> sigma(k, 0);
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    double v = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      v += e.a[p * k + sigma[p]] + c * e.b[p * k + sigma[p]];
    }
    best = std::max(best, v);
    std::size_t i = 0;
    while (i < k && ++sigma[i] == k) sigma[i++] = 0;
    if (i == k) break;
  }
  return best;
}

double RowMaxSum(const Affine& e, std::size_t k, double c) {
  double total = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    double row = -std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < k; ++q) row = std::max(row, e.a[p * k + q] + c * e.b[p * k + q]);
    total += row;
  }
  return total;
}

// 5. Matrix decomposition vs exhaustive remaps; breakpoints vs dense scan.
Outcome BruteForce() {
  std::mt19937_64 gen(505);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_regret = 0.0;
  int scan_failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + trial % 4;
    const std::size_t T = 1 + gen() % 20;
    const Transcript tr = RandomTranscript(gen, k, T);
    const auto m = auditor::BuildRegretMatrix(tr);
    const Affine e = DefinitionEntries(tr);
    for (int j = 0; j < 5; ++j) {
      const double c = tr.grid().cost_hi() * u(gen);
      worst_regret = std::max(
          worst_regret,
          std::abs(auditor::CalibratedRegretValue(m, c) - EnumerateRemaps(e, k, c)));
    }
    if (trial % 10 != 0) continue;
    const double lo = tr.grid().cost_lo(), hi = tr.grid().cost_hi();
    const auto plausible = auditor::EstimatedPlausibleCost(m, lo, hi);
    constexpr int kScan = 100000;
    const double step = (hi - lo) / (kScan - 1);
    double scan_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kScan; ++i) scan_min = std::min(scan_min, RowMaxSum(e, k, lo + step * i));
    double slope = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      double row = 0.0;
      for (std::size_t q = 0; q < k; ++q) row = std::max(row, std::abs(e.b[p * k + q]));
      slope += row;
    }
    const bool ok = plausible.regret <= scan_min + 1e-12 &&
                    scan_min <= plausible.regret + slope * step + 1e-12;
    scan_failures += !ok;
  }
  const bool ok = worst_regret <= 1e-12 && scan_failures == 0;
  return {ok, Fmt("max |matrix - enumeration| %.3g over 500 evaluations; "
                  "%d of 10 dense scans disagree",
                  worst_regret, scan_failures)};
}

harness::Scenario ConcentrationScenario() {
  harness::Scenario s = harness::LoadScenario(Scenario("competitive.json"));
  s.id = "concentration";
  s.horizon = {harness::Horizon::Kind::kRounds, 20000};
  s.audit.alpha = 0.1;
  s.replications = 200;
  s.seed = 606;
  s.write_transcripts = false;
  return s;
}

// 6. Both tails of the estimation error stay inside the margin.
Outcome Concentration() {
  const harness::Scenario s = ConcentrationScenario();
  const auto report = harness::RunAuditSuite(s);
  int upper = 0, lower = 0;
  double widest = 0.0;
  for (const auto& r : report.replications) {
    const auto& v = r.verdict;
    const auto& o = *r.oracle;
    upper += v.estimator > o.expected_calibrated + v.margin;
    lower += v.estimator < o.plausible - v.margin;
    widest = std::max(widest, std::abs(v.estimator - o.expected_calibrated) / v.margin);
  }
  const double n = static_cast<double>(report.replications.size());
  const bool ok = upper / n <= s.audit.alpha && lower / n <= s.audit.alpha;
  return {ok, Fmt("upper %.3f lower %.3f (alpha %.2f); max |error|/margin %.4f",
                  upper / n, lower / n, s.audit.alpha, widest)};
}

double collusive_rho = 0.0;

// 7. Competitive learner passes, collusive pair fails at r = rho / 2.
Outcome TwoSided() {
  const harness::Scenario comp = harness::LoadScenario(Scenario("competitive.json"));
  const auto comp_report = harness::RunAuditSuite(comp);

  const harness::Scenario coll = harness::LoadScenario(Scenario("collusive.json"));
  const auto coll_report = harness::RunAuditSuite(coll);
  std::vector<double> plausible;
  for (const auto& r : coll_report.replications) plausible.push_back(r.oracle->plausible);
  collusive_rho = Mean(plausible);
  const double target = collusive_rho / 2.0;
  std::size_t fails = 0;
  for (const auto& r : coll_report.replications) fails += !(r.verdict.ucb <= 2.0 * target);

  const double pass_rate = comp_report.pass_rate;
  const double fail_rate = static_cast<double>(fails) / coll_report.replications.size();
  const bool ok = pass_rate >= 0.9 && fail_rate >= 0.9;
  return {ok, Fmt("competitive pass %.2f (r=%.4f, mean UCB %.4f); collusive fail %.2f "
                  "(rho %.5f, r=%.5f, mean UCB %.4f)",
                  pass_rate, comp.audit.target_regret, comp_report.mean_ucb,
                  fail_rate, collusive_rho, target, coll_report.mean_ucb)};
}

// 8. Floor exact, run length, bounded regret inflation.
Outcome Augmentation() {
  harness::Scenario aug = harness::LoadScenario(Scenario("competitive.json"));
  aug.id = "augmentation";
  constexpr std::uint64_t kInner = 20000;
  aug.horizon = {harness::Horizon::Kind::kInnerCalls, kInner};
  aug.replications = 200;
  aug.seed = 808;
  aug.write_transcripts = false;
  harness::Scenario plain = aug;
  plain.agents[0].exploration_floor.reset();
  plain.horizon = {harness::Horizon::Kind::kRounds, kInner};
  plain.audit.exploration_requirement = 0.0;

  const double floor = *aug.agents[0].exploration_floor;
  const double k = static_cast<double>(aug.grid.size());
  const auto aug_report = harness::RunAuditSuite(aug);
  const auto plain_report = harness::RunAuditSuite(plain);

  bool floor_ok = true;
  std::vector<double> lengths, aug_regret, plain_regret;
  for (const auto& r : aug_report.replications) {
    floor_ok = floor_ok && r.verdict.min_exploration >= floor && r.inner_calls == kInner;
    lengths.push_back(static_cast<double>(r.rounds));
    aug_regret.push_back(r.oracle->expected_calibrated);
  }
  for (const auto& r : plain_report.replications) {
    plain_regret.push_back(r.oracle->expected_calibrated);
  }
  const double expected_length = kInner / (1.0 - k * floor);
  const double se = StdErr(lengths);
  const double z = (Mean(lengths) - expected_length) / se;
  const double inflation = Mean(aug_regret) - Mean(plain_regret);
  const double bound = k * floor * aug.grid.max_price() + 0.01;
  const bool ok = floor_ok && std::abs(z) <= 3.0 && inflation <= bound;
  return {ok, Fmt("floor %s; mean length %.1f vs %.1f (z %.2f); inflation %.5f <= %.4f",
                  floor_ok ? "exact" : "violated", Mean(lengths), expected_length, z,
                  inflation, bound)};
}

// 9. UCB shrinks for the competitive learner and stays above rho / 2 for collusion.
Outcome Consistency() {
  const std::vector<std::uint64_t> horizons = {1000, 10000, 100000};
  const harness::Scenario comp = harness::LoadScenario(Scenario("competitive.json"));
  const harness::Scenario coll = harness::LoadScenario(Scenario("collusive.json"));
  const auto comp_points = harness::ConsistencySweep(comp, horizons);
  const auto coll_points = harness::ConsistencySweep(coll, horizons);
  double rho = collusive_rho;
  if (rho <= 0.0) rho = coll_points.back().mean_oracle_plausible;

  bool decreasing = true, bounded = true;
  std::ostringstream detail;
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    if (i > 0) decreasing = decreasing && comp_points[i].mean_ucb < comp_points[i - 1].mean_ucb;
    bounded = bounded && coll_points[i].mean_ucb >= rho / 2.0;
    detail << Fmt("T=%llu competitive %.4f collusive %.4f; ",
                  static_cast<unsigned long long>(horizons[i]), comp_points[i].mean_ucb,
                  coll_points[i].mean_ucb);
  }
  detail << Fmt("rho/2 %.5f", rho / 2.0);
  return {decreasing && bounded, detail.str()};
}

// 10. Formula values against direct evaluation.
Outcome Formulas() {
  const double ln160 = std::log(160.0);
  const double t_direct = ln160 * 2.0 * (2.0 / 0.1) * (2.0 / 0.1) * 11.0 * 11.0;
  const std::uint64_t t_lib = auditor::SampleComplexity(2, 1.0, 0.05, 0.1, 0.1);
  const bool t_ok = t_lib == static_cast<std::uint64_t>(std::ceil(t_direct));

  Transcript one(market::PriceGrid({0.5, 1.0}, 0.0, 0.2));
  one.Append(std::vector<double>{0.5, 0.5}, 0, 0.5);
  const double d_direct = 2.0 * std::sqrt(2.0 * ln160 * 9.0);
  const double d_lib = auditor::ErrorMargin(one, 0.05);
  const bool d_ok = std::abs(d_lib - d_direct) <= 5e-7 * d_direct;

  Transcript uniform(market::PriceGrid({0.25, 0.5, 1.0}, 0.0, 0.2));
  for (int t = 0; t < 400; ++t) uniform.Append(std::vector<double>(3, 1.0 / 3), t % 3, 0.3);
  const double u_direct = 3.0 / std::sqrt(400.0) * std::sqrt(2.0 * std::log(18.0 / 0.1)) * 4.0;
  const bool u_ok = std::abs(auditor::ErrorMargin(uniform, 0.1) - u_direct) <= 5e-7 * u_direct;

  const bool a_ok = auditor::ConsistencyAlpha(1) == 0.5 &&
                    std::abs(auditor::ConsistencyAlpha(100) - 1e-4) <= 1e-18;

  return {t_ok && d_ok && u_ok && a_ok,
          Fmt("rounds %llu (direct %.4f; literal 491219); margin %.6f (direct %.6f; "
              "literal 17.78 uses ln 80); uniform %s; alpha schedule %s",
              static_cast<unsigned long long>(t_lib), t_direct, d_lib, d_direct,
              u_ok ? "ok" : "off", a_ok ? "ok" : "off")};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "duopoly equilibrium", Equilibrium},
      {2, "collusion dominance", Dominance},
      {3, "external vs calibrated separation", Separation},
      {4, "estimator unbiasedness", Unbiasedness},
      {5, "brute-force equivalence", BruteForce},
      {6, "concentration", Concentration},
      {7, "two-sided test behavior", TwoSided},
      {8, "augmentation contract", Augmentation},
      {9, "consistency sweep", Consistency},
      {10, "formula spot checks", Formulas},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2d %s: %s [%.2fs]\n", out.pass ? "PASS" : "FAIL", c.id, c.name,
                out.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !out.pass;
  }
  return failed == 0 ? 0 : 1;
}
