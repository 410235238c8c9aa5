#include "colaudit/auditor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "colaudit/kernels.h"
#include "json.hpp"

namespace colaudit::auditor {
namespace {

void Require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

RemapChoice RowChoice(const RegretMatrix& m, std::size_t p, double c) {
  RemapChoice choice{p, 0, m.At(p, 0, c), {}};
  for (std::size_t q = 0; q < m.k(); ++q) {
    const double v = m.At(p, q, c);
    if (v > choice.gain) {
      choice.gain = v;
      choice.to = q;
    }
    if (v > 0.0) choice.profitable.push_back(q);
  }
  return choice;
}

std::vector<double> EvaluateObjective(const RegretMatrix& m,
                                      std::span<const double> costs,
                                      Backend backend) {
  std::vector<double> out(costs.size());
  if (backend == Backend::kParallel) {
    kernels::EvaluateRemapObjective(m.a(), m.b(), m.k(), costs, out);
  } else {
    kernels::serial::EvaluateRemapObjective(m.a(), m.b(), m.k(), costs, out);
  }
  return out;
}

PlausibleCost GoldenSection(const RegretMatrix& m, double lo, double hi) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = CalibratedRegretValue(m, x1), f2 = CalibratedRegretValue(m, x2);
  while (b - a > 1e-9) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = CalibratedRegretValue(m, x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = CalibratedRegretValue(m, x2);
    }
  }
  PlausibleCost best{lo, CalibratedRegretValue(m, lo)};
  for (double c : {0.5 * (a + b), hi}) {
    const double f = CalibratedRegretValue(m, c);
    if (f < best.regret) best = {c, f};
  }
  return best;
}

nlohmann::json FiniteOrNull(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

}  // namespace

RegretMatrix::RegretMatrix(std::size_t k)
    : k_(k), a_(k * k, 0.0), b_(k * k, 0.0) {}

RegretMatrix RegretMatrix::FromCrossMoments(std::span<const double> moments,
                                            std::span<const double> levels,
                                            double rounds) {
  const std::size_t k = levels.size();
  Require(moments.size() == k * k, "moment matrix must be k x k");
  RegretMatrix m(k);
  if (rounds <= 0.0) return m;
  for (std::size_t p = 0; p < k; ++p) {
    const double own = moments[p * k + p];
    for (std::size_t q = 0; q < k; ++q) {
      const double other = moments[p * k + q];
      m.a_[p * k + q] = (levels[q] * other - levels[p] * own) / rounds;
      m.b_[p * k + q] = (own - other) / rounds;
    }
  }
  return m;
}

double PropensityEstimate(const transcript::TranscriptRound& round,
                          std::size_t p) {
  if (p != round.price_index) return 0.0;
  return round.observed_demand / round.pi[round.price_index];
}

RegretMatrix BuildRegretMatrix(const transcript::Transcript& tr,
                               Backend backend) {
  const std::size_t k = tr.k();
  std::vector<double> estimates(tr.size());
  for (std::size_t t = 0; t < tr.size(); ++t) {
    estimates[t] = PropensityEstimate(tr.round(t), tr.posted()[t]);
  }
  std::vector<double> moments(k * k, 0.0);
  if (backend == Backend::kParallel) {
    kernels::AccumulatePropensityMoments(tr.probabilities(), tr.posted(),
                                         estimates, k, moments);
  } else {
    kernels::serial::AccumulatePropensityMoments(tr.probabilities(),
                                                 tr.posted(), estimates, k,
                                                 moments);
  }
  return RegretMatrix::FromCrossMoments(moments, tr.grid().levels(),
                                        static_cast<double>(tr.size()));
}

CalibratedRegret EstimatedCalibratedRegret(const RegretMatrix& m, double c) {
  CalibratedRegret out{0.0, {}};
  out.remaps.reserve(m.k());
  for (std::size_t p = 0; p < m.k(); ++p) {
    out.remaps.push_back(RowChoice(m, p, c));
    out.value += out.remaps.back().gain;
  }
  return out;
}

double CalibratedRegretValue(const RegretMatrix& m, double c) {
  double total = 0.0;
  for (std::size_t p = 0; p < m.k(); ++p) {
    double best = m.At(p, 0, c);
    for (std::size_t q = 1; q < m.k(); ++q) best = std::max(best, m.At(p, q, c));
    total += best;
  }
  return total;
}

std::vector<double> EnvelopeBreakpoints(const RegretMatrix& m, double lo,
                                        double hi) {
  std::vector<double> points;
  const std::size_t k = m.k();
  for (std::size_t p = 0; p < k; ++p) {
    // Active line at lo: the row max, ties to the steepest (it stays on top
    // to the right). Later lines are handed over at each crossing rather than
    // re-derived from values, so rounding at a crossing cannot revive a line
    // that has already been overtaken.
    std::size_t cur = 0;
    for (std::size_t q = 1; q < k; ++q) {
      const double v = m.At(p, q, lo), best = m.At(p, cur, lo);
      if (v > best || (v == best && m.b(p, q) > m.b(p, cur))) cur = q;
    }
    double c = lo;
    while (true) {
      double next = hi;
      std::size_t successor = cur;
      for (std::size_t q = 0; q < k; ++q) {
        const double slope_gap = m.b(p, q) - m.b(p, cur);
        if (slope_gap <= 0.0) continue;
        const double x = (m.a(p, cur) - m.a(p, q)) / slope_gap;
        if (x <= c) continue;
        if (x < next || (x == next && m.b(p, q) > m.b(p, successor))) {
          next = x;
          successor = q;
        }
      }
      if (successor == cur || !(next < hi)) break;
      points.push_back(next);
      c = next;
      cur = successor;
    }
  }
  return points;
}

PlausibleCost EstimatedPlausibleCost(const RegretMatrix& m, double lo,
                                     double hi, Backend backend) {
  Require(lo <= hi, "cost bounds must satisfy lo <= hi");
  if (m.k() > kBreakpointLimit) return GoldenSection(m, lo, hi);
  std::vector<double> candidates = EnvelopeBreakpoints(m, lo, hi);
  candidates.push_back(lo);
  candidates.push_back(hi);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());
  const std::vector<double> values = EvaluateObjective(m, candidates, backend);
  PlausibleCost best{candidates[0], values[0]};
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    // Near-equal values are ties; the smaller cost wins.
    const double slack = 1e-12 * std::max(1.0, std::abs(best.regret));
    if (values[i] < best.regret - slack) best = {candidates[i], values[i]};
  }
  return best;
}

double ErrorMargin(std::size_t k, double max_price, std::uint64_t rounds,
                   double sum_sq_inverse_min, double alpha) {
  Require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  if (rounds == 0 || !std::isfinite(sum_sq_inverse_min)) {
    return std::numeric_limits<double>::infinity();
  }
  const double kd = static_cast<double>(k);
  const double log_term = std::log(2.0 * kd * kd / alpha);
  return kd * max_price / static_cast<double>(rounds) *
         std::sqrt(2.0 * log_term * sum_sq_inverse_min);
}

double ErrorMargin(const transcript::Transcript& tr, double alpha) {
  double sum = 0.0;
  const std::size_t k = tr.k();
  const auto probs = tr.probabilities();
  for (std::size_t t = 0; t < tr.size(); ++t) {
    const double lo =
        *std::min_element(probs.begin() + t * k, probs.begin() + (t + 1) * k);
    if (lo <= 0.0) {
      sum = std::numeric_limits<double>::infinity();
      break;
    }
    const double term = 1.0 / lo + 1.0;
    sum += term * term;
  }
  return ErrorMargin(k, tr.grid().max_price(), tr.size(), sum, alpha);
}

void AuditConfig::Validate(std::size_t k) const {
  Require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  Require(target_regret > 0.0, "target regret must be positive");
  Require(exploration_requirement >= 0.0 &&
              exploration_requirement * static_cast<double>(k) < 1.0,
          "exploration requirement must lie in [0, 1/k)");
  if (cost_lo && cost_hi) {
    Require(*cost_lo <= *cost_hi, "cost bounds must satisfy lo <= hi");
  }
}

AuditVerdict Audit(const transcript::Transcript& tr, const AuditConfig& cfg,
                   Backend backend) {
  cfg.Validate(tr.k());
  AuditVerdict v;
  v.k = tr.k();
  v.rounds = tr.size();
  v.alpha = cfg.alpha;
  v.target_regret = cfg.target_regret;
  v.threshold = 2.0 * cfg.target_regret;
  v.exploration_requirement = cfg.exploration_requirement;
  v.cost_lo = cfg.cost_lo.value_or(tr.grid().cost_lo());
  v.cost_hi = cfg.cost_hi.value_or(tr.grid().cost_hi());
  Require(v.cost_lo <= v.cost_hi, "cost bounds must satisfy lo <= hi");
  v.levels.assign(tr.grid().levels().begin(), tr.grid().levels().end());
  v.min_exploration = tr.empty() ? 0.0 : MinExplorationProbability(tr);

  const RegretMatrix m = BuildRegretMatrix(tr, backend);
  const PlausibleCost pc =
      EstimatedPlausibleCost(m, v.cost_lo, v.cost_hi, backend);
  v.plausible_cost = pc.cost;
  v.estimator = pc.regret;
  v.remaps = EstimatedCalibratedRegret(m, pc.cost).remaps;
  v.margin = ErrorMargin(tr, cfg.alpha);
  v.infeasible_margin = !std::isfinite(v.margin);
  v.ucb = v.estimator + v.margin;
  v.pass = !v.infeasible_margin && v.ucb <= v.threshold;
  return v;
}

std::string VerdictToKeyValue(const AuditVerdict& v) {
  std::ostringstream os;
  os.precision(10);
  os << "verdict=" << (v.pass ? "PASS" : "FAIL") << '\n'
     << "estimator=" << v.estimator << '\n'
     << "margin=" << v.margin << '\n'
     << "ucb=" << v.ucb << '\n'
     << "threshold=" << v.threshold << '\n'
     << "plausible_cost=" << v.plausible_cost << '\n'
     << "cost_lo=" << v.cost_lo << '\n'
     << "cost_hi=" << v.cost_hi << '\n'
     << "min_exploration=" << v.min_exploration << '\n'
     << "exploration_requirement=" << v.exploration_requirement << '\n'
     << "exploration_met="
     << (v.min_exploration >= v.exploration_requirement ? "true" : "false")
     << '\n'
     << "infeasible_margin=" << (v.infeasible_margin ? "true" : "false") << '\n'
     << "alpha=" << v.alpha << '\n'
     << "target_regret=" << v.target_regret << '\n'
     << "rounds=" << v.rounds << '\n'
     << "k=" << v.k << '\n';
  for (const auto& r : v.remaps) {
    if (r.to == r.from || r.gain <= 0.0) continue;
    os << "remap=" << v.levels[r.from] << "->" << v.levels[r.to]
       << " gain=" << r.gain << '\n';
  }
  return os.str();
}

std::string VerdictToJsonLine(const AuditVerdict& v) {
  nlohmann::json j;
  j["verdict"] = v.pass ? "PASS" : "FAIL";
  j["estimator"] = FiniteOrNull(v.estimator);
  j["margin"] = FiniteOrNull(v.margin);
  j["ucb"] = FiniteOrNull(v.ucb);
  j["threshold"] = v.threshold;
  j["plausible_cost"] = v.plausible_cost;
  j["cost_bounds"] = {v.cost_lo, v.cost_hi};
  j["min_exploration"] = v.min_exploration;
  j["exploration_requirement"] = v.exploration_requirement;
  j["infeasible_margin"] = v.infeasible_margin;
  j["alpha"] = v.alpha;
  j["target_regret"] = v.target_regret;
  j["rounds"] = v.rounds;
  j["k"] = v.k;
  nlohmann::json remaps = nlohmann::json::array();
  for (const auto& r : v.remaps) {
    remaps.push_back({{"from", v.levels[r.from]},
                      {"to", v.levels[r.to]},
                      {"gain", r.gain}});
  }
  j["remaps"] = std::move(remaps);
  return j.dump();
}

double SampleComplexityExact(std::size_t k, double max_price, double alpha,
                             double target_regret, double floor) {
  Require(k >= 1 && max_price > 0.0 && target_regret > 0.0 && floor > 0.0,
          "sample complexity parameters must be positive");
  Require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  const double kd = static_cast<double>(k);
  Require(floor * kd < 1.0, "exploration floor must be below 1/k");
  const double ratio = kd * max_price / target_regret;
  const double explore = 1.0 / floor + 1.0;
  return std::log(2.0 * kd * kd / alpha) * 2.0 * ratio * ratio * explore *
         explore;
}

std::uint64_t SampleComplexity(std::size_t k, double max_price, double alpha,
                               double target_regret, double floor) {
  return static_cast<std::uint64_t>(
      std::ceil(SampleComplexityExact(k, max_price, alpha, target_regret, floor)));
}

double TargetRegretForHorizon(std::size_t k, double max_price, double alpha,
                              double floor, std::uint64_t rounds) {
  Require(rounds > 0, "horizon must be positive");
  // Invert the sample-complexity formula for the target.
  const double at_one = SampleComplexityExact(k, max_price, alpha, 1.0, floor);
  return std::sqrt(at_one / static_cast<double>(rounds));
}

double ConsistencyAlpha(std::uint64_t rounds) {
  Require(rounds >= 1, "horizon must be at least one round");
  const double t = static_cast<double>(rounds);
  return std::min(0.5, 1.0 / (t * t));
}

// ---------------------------------------------------------------------------

OracleLog::OracleLog(market::PriceGrid grid, bool keep_curves)
    : grid_(std::move(grid)),
      keep_curves_(keep_curves),
      expected_(grid_.size() * grid_.size(), 0.0),
      hindsight_(grid_.size() * grid_.size(), 0.0),
      block_pi_(kBlock * grid_.size()),
      block_curves_(kBlock * grid_.size()) {}

void OracleLog::Record(std::span<const double> pi, std::size_t posted,
                       std::span<const double> curve) {
  const std::size_t k = grid_.size();
  Require(pi.size() == k && curve.size() == k && posted < k,
          "oracle record has the wrong shape");
  std::copy(pi.begin(), pi.end(), block_pi_.begin() + block_rows_ * k);
  std::copy(curve.begin(), curve.end(), block_curves_.begin() + block_rows_ * k);
  for (std::size_t q = 0; q < k; ++q) hindsight_[posted * k + q] += curve[q];
  if (keep_curves_) {
    curves_.insert(curves_.end(), curve.begin(), curve.end());
    kept_probs_.insert(kept_probs_.end(), pi.begin(), pi.end());
    kept_posted_.push_back(posted);
  }
  ++rounds_;
  if (++block_rows_ == kBlock) Flush();
}

void OracleLog::Flush(Backend backend) {
  if (block_rows_ == 0) return;
  const std::size_t k = grid_.size();
  if (backend == Backend::kParallel) {
    kernels::AccumulateCrossMoments(block_pi_, block_curves_, block_rows_, k,
                                    expected_);
  } else {
    kernels::serial::AccumulateCrossMoments(block_pi_, block_curves_,
                                            block_rows_, k, expected_);
  }
  block_rows_ = 0;
}

RegretMatrix OracleMatrix(const OracleLog& log, Weighting weighting) {
  const auto moments = weighting == Weighting::kExpected
                           ? log.expected_moments()
                           : log.hindsight_moments();
  return RegretMatrix::FromCrossMoments(moments, log.grid().levels(),
                                        static_cast<double>(log.rounds()));
}

double ExternalRegret(const OracleLog& log, Weighting weighting, double cost) {
  const std::size_t k = log.grid().size();
  const auto s = weighting == Weighting::kExpected ? log.expected_moments()
                                                   : log.hindsight_moments();
  const auto levels = log.grid().levels();
  const double rounds = static_cast<double>(log.rounds());
  if (rounds == 0.0) return 0.0;
  double realized = 0.0;
  for (std::size_t p = 0; p < k; ++p) realized += (levels[p] - cost) * s[p * k + p];
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < k; ++q) {
    double column = 0.0;
    for (std::size_t p = 0; p < k; ++p) column += s[p * k + q];
    best = std::max(best, (levels[q] - cost) * column);
  }
  return (best - realized) / rounds;
}

OracleRegrets ComputeOracleRegrets(const std::optional<OracleLog>& log,
                                   double cost, double cost_lo,
                                   double cost_hi) {
  if (!log) {
    throw OracleUnavailableError(
        "oracle regrets need true counterfactual demand; a bare transcript "
        "does not carry it");
  }
  OracleLog flushed = *log;
  flushed.Flush();
  OracleRegrets out;
  const RegretMatrix expected = OracleMatrix(flushed, Weighting::kExpected);
  const RegretMatrix hindsight = OracleMatrix(flushed, Weighting::kHindsight);
  const CalibratedRegret e = EstimatedCalibratedRegret(expected, cost);
  const CalibratedRegret h = EstimatedCalibratedRegret(hindsight, cost);
  out.expected_calibrated = e.value;
  out.expected_remaps = e.remaps;
  out.hindsight_calibrated = h.value;
  out.hindsight_remaps = h.remaps;
  out.expected_external = ExternalRegret(flushed, Weighting::kExpected, cost);
  out.hindsight_external = ExternalRegret(flushed, Weighting::kHindsight, cost);
  const PlausibleCost pc = EstimatedPlausibleCost(expected, cost_lo, cost_hi);
  out.plausible = pc.regret;
  out.plausible_cost = pc.cost;
  return out;
}

}  // namespace colaudit::auditor
