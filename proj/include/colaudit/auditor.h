#ifndef COLAUDIT_AUDITOR_H_
#define COLAUDIT_AUDITOR_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "colaudit/market.h"
#include "colaudit/transcript.h"

namespace colaudit::auditor {

enum class Backend { kParallel, kSerial };

// Accumulated remap deviations, affine in the cost c:
//   entry(p, q)(c) = a(p, q) + c * b(p, q),
// averaged over rounds. Entry (p, q) is the average gain from posting level q
// on the rounds (weighted by pi^t(p)) where level p was played.
class RegretMatrix {
 public:
  explicit RegretMatrix(std::size_t k);

  // From moments[p*k + q] = sum_t w^t(p) x^t(q), where w is the weight put on
  // level p in round t and x^t(q) the (true or estimated) demand at q.
  static RegretMatrix FromCrossMoments(std::span<const double> moments,
                                       std::span<const double> levels,
                                       double rounds);

  std::size_t k() const { return k_; }
  double a(std::size_t p, std::size_t q) const { return a_[p * k_ + q]; }
  double b(std::size_t p, std::size_t q) const { return b_[p * k_ + q]; }
  double At(std::size_t p, std::size_t q, double c) const {
    return a(p, q) + c * b(p, q);
  }
  std::span<const double> a() const { return a_; }
  std::span<const double> b() const { return b_; }
  std::span<double> mutable_a() { return a_; }
  std::span<double> mutable_b() { return b_; }

 private:
  std::size_t k_;
  std::vector<double> a_;
  std::vector<double> b_;
};

// x^t(p^t) / pi^t(p^t) at the posted level, zero elsewhere.
double PropensityEstimate(const transcript::TranscriptRound& round,
                          std::size_t p);

RegretMatrix BuildRegretMatrix(const transcript::Transcript& tr,
                               Backend backend = Backend::kParallel);

struct RemapChoice {
  std::size_t from;
  std::size_t to;    // argmax of the row; smallest index on ties
  double gain;       // row maximum, >= 0
  std::vector<std::size_t> profitable;  // every q with strictly positive gain
};

struct CalibratedRegret {
  double value;
  std::vector<RemapChoice> remaps;  // one per level
};

// max over remaps sigma of sum_p entry(p, sigma(p))(c), which separates into
// a sum of row maxima.
CalibratedRegret EstimatedCalibratedRegret(const RegretMatrix& m, double c);
double CalibratedRegretValue(const RegretMatrix& m, double c);

// Points in (lo, hi) where some row's upper envelope changes line.
std::vector<double> EnvelopeBreakpoints(const RegretMatrix& m, double lo,
                                        double hi);

struct PlausibleCost {
  double cost;
  double regret;
};

// argmin over c in [lo, hi] of the row-max sum; smallest c on ties.
PlausibleCost EstimatedPlausibleCost(const RegretMatrix& m, double lo,
                                     double hi,
                                     Backend backend = Backend::kParallel);

// Exact for k <= kBreakpointLimit, golden-section search above it.
inline constexpr std::size_t kBreakpointLimit = 100;

// delta^T = (k pmax / T) sqrt(2 ln(2 k^2 / alpha) sum_s (1/min_p pi^s(p) + 1)^2).
// Infinite when some round leaves a level unexplored or T = 0.
double ErrorMargin(const transcript::Transcript& tr, double alpha);
double ErrorMargin(std::size_t k, double max_price, std::uint64_t rounds,
                   double sum_sq_inverse_min, double alpha);

struct AuditConfig {
  double alpha = 0.05;
  double target_regret = 0.1;
  // Exploration the regulator requires; reported, not enforced.
  double exploration_requirement = 0.0;
  // Defaults to the cost bounds recorded with the transcript's grid.
  std::optional<double> cost_lo;
  std::optional<double> cost_hi;

  void Validate(std::size_t k) const;
};

struct AuditVerdict {
  double estimator = 0.0;       // estimated plausible calibrated regret
  double margin = 0.0;          // delta^T
  double ucb = 0.0;             // estimator + margin
  double threshold = 0.0;       // 2 * target regret
  double plausible_cost = 0.0;  // c-tilde
  double cost_lo = 0.0;
  double cost_hi = 0.0;
  double min_exploration = 0.0;
  double exploration_requirement = 0.0;
  double alpha = 0.0;
  double target_regret = 0.0;
  std::uint64_t rounds = 0;
  std::size_t k = 0;
  bool infeasible_margin = false;
  bool pass = false;
  std::vector<double> levels;
  std::vector<RemapChoice> remaps;  // at the plausible cost
};

AuditVerdict Audit(const transcript::Transcript& tr, const AuditConfig& cfg,
                   Backend backend = Backend::kParallel);

std::string VerdictToKeyValue(const AuditVerdict& v);
std::string VerdictToJsonLine(const AuditVerdict& v);

// Rounds sufficient for the two-sided guarantee:
//   ln(2k^2/alpha) * 2 (k pmax / target)^2 (1/floor + 1)^2, rounded up.
double SampleComplexityExact(std::size_t k, double max_price, double alpha,
                             double target_regret, double floor);
std::uint64_t SampleComplexity(std::size_t k, double max_price, double alpha,
                               double target_regret, double floor);

// Smallest target regret whose sample complexity fits in `rounds`.
double TargetRegretForHorizon(std::size_t k, double max_price, double alpha,
                              double floor, std::uint64_t rounds);

// alpha^T = min(0.5, T^-2).
double ConsistencyAlpha(std::uint64_t rounds);

// ---------------------------------------------------------------------------
// Oracle mode: regrets from true counterfactual demand curves.

class OracleUnavailableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sufficient statistics of one seller's true demand curves over a run.
class OracleLog {
 public:
  explicit OracleLog(market::PriceGrid grid, bool keep_curves = false);

  // Round with reported law pi, posted level, and the true curve x^t(.).
  void Record(std::span<const double> pi, std::size_t posted,
              std::span<const double> curve);
  // Flushes buffered rounds into the moment matrices.
  void Flush(Backend backend = Backend::kParallel);

  const market::PriceGrid& grid() const { return grid_; }
  std::uint64_t rounds() const { return rounds_; }
  // sum_t pi^t(p) x^t(q); requires Flush().
  std::span<const double> expected_moments() const { return expected_; }
  // sum_t [p^t = p] x^t(q).
  std::span<const double> hindsight_moments() const { return hindsight_; }
  // Full curves, row-major rounds x k, when keep_curves was set.
  std::span<const double> curves() const { return curves_; }
  std::span<const double> probabilities() const { return kept_probs_; }
  std::span<const std::size_t> posted() const { return kept_posted_; }

 private:
  static constexpr std::size_t kBlock = 4096;

  market::PriceGrid grid_;
  bool keep_curves_;
  std::uint64_t rounds_ = 0;
  std::vector<double> expected_;
  std::vector<double> hindsight_;
  std::vector<double> block_pi_;
  std::vector<double> block_curves_;
  std::size_t block_rows_ = 0;
  std::vector<double> curves_;
  std::vector<double> kept_probs_;
  std::vector<std::size_t> kept_posted_;
};

enum class Weighting { kExpected, kHindsight };

RegretMatrix OracleMatrix(const OracleLog& log, Weighting weighting);

// max_q of the average gain from always posting q instead of what was posted.
double ExternalRegret(const OracleLog& log, Weighting weighting, double cost);

struct OracleRegrets {
  double expected_calibrated = 0.0;
  double hindsight_calibrated = 0.0;
  double expected_external = 0.0;
  double hindsight_external = 0.0;
  double plausible = 0.0;  // min over [lo, hi] of expected calibrated
  double plausible_cost = 0.0;
  std::vector<RemapChoice> expected_remaps;
  std::vector<RemapChoice> hindsight_remaps;
};

// Throws OracleUnavailableError without a log (e.g. a transcript read from
// disk carries no counterfactual demand).
OracleRegrets ComputeOracleRegrets(const std::optional<OracleLog>& log,
                                   double cost, double cost_lo,
                                   double cost_hi);

}  // namespace colaudit::auditor

#endif  // COLAUDIT_AUDITOR_H_
