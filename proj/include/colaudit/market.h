#ifndef COLAUDIT_MARKET_H_
#define COLAUDIT_MARKET_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace colaudit::market {

// Ordered set of discrete price levels together with the cost interval the
// regulator assumes for the seller. The maximum price is the largest level.
class PriceGrid {
 public:
  PriceGrid(std::vector<double> levels, double cost_lo, double cost_hi);

  // `count` evenly spaced levels on [lo, hi], endpoints included.
  static PriceGrid Uniform(double lo, double hi, std::size_t count,
                           double cost_lo, double cost_hi);

  std::size_t size() const { return levels_.size(); }
  double level(std::size_t i) const { return levels_[i]; }
  std::span<const double> levels() const { return levels_; }
  double max_price() const { return levels_.back(); }
  double cost_lo() const { return cost_lo_; }
  double cost_hi() const { return cost_hi_; }

  // Index of the level equal to `price` within `tol`, if any.
  std::optional<std::size_t> IndexOf(double price, double tol = 1e-9) const;
  // Like IndexOf but throws std::invalid_argument for off-grid prices.
  std::size_t RequireIndex(double price) const;

  bool operator==(const PriceGrid&) const = default;

 private:
  std::vector<double> levels_;
  double cost_lo_;
  double cost_hi_;
};

// Demand for a seller at own price given everything else about the round.
using DemandFunction = std::function<double(double own, double other)>;

// Seller-1 demand when valuations are i.i.d. U[0,1]^2 and the buyer buys the
// good with the larger nonnegative surplus, ties to seller 1.
double UniformDuopolyDemand(double p_own, double p_other);

// Area of {v : v_own - p_own >= max(v_other - p_other, 0)} inside the box
// [0, own_hi] x [0, other_hi]. Unnormalized; divide by the box area to get a
// probability under the uniform law on the box.
double BoxDemandArea(double p_own, double p_other, double own_hi,
                     double other_hi);

// Closed-form demand under the uniform law on [0, own_hi] x [0, other_hi].
double UniformBoxDemand(double p_own, double p_other, double own_hi,
                        double other_hi);

// Total profit of both sellers at a price pair in the uniform duopoly.
double DuopolyTotalProfit(double p1, double p2, double c1, double c2);

inline constexpr int kSignalHigh = 0;
inline constexpr int kSignalLow = 1;

// Signal that reports kSignalLow iff every valuation is at most its threshold.
struct LowValuationSignal {
  std::vector<double> thresholds;
  std::vector<int> observers;

  int Evaluate(std::span<const double> valuations) const;
  bool ObservedBy(int seller) const;
};

struct BuyerModel {
  enum class Kind { kUniformBox, kPoint };
  Kind kind = Kind::kUniformBox;
  // Upper valuation bound per seller (uniform box) or the fixed valuation
  // vector (point buyer).
  std::vector<double> values = {1.0, 1.0};
  std::optional<LowValuationSignal> signal;

  int num_sellers() const { return static_cast<int>(values.size()); }
  // Valuations from a vector of independent U[0,1) draws, one per seller.
  void Valuations(std::span<const double> uniforms,
                  std::span<double> out) const;
};

// Index of the seller the buyer buys from, or -1 for no purchase. Ties go to
// the lowest seller index.
int BuyerChoice(std::span<const double> valuations,
                std::span<const double> prices);

// Fraction of `n_samples` sampled buyers purchasing from each seller.
std::vector<double> SampleDemandMonteCarlo(const BuyerModel& buyer,
                                           std::span<const double> prices,
                                           std::size_t n_samples,
                                           std::uint64_t seed);

// argmax over the grid of (p - cost) * demand(p, opponent_price); ties go to
// the lowest price.
double BestResponsePrice(const PriceGrid& grid, double cost,
                         double opponent_price, const DemandFunction& demand);

class NonConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EquilibriumResult {
  double p1;
  double p2;
  int iterations;
};

// Alternating best responses (seller 1 moves first) until the price pair
// repeats. Throws NonConvergenceError on a cycle or when `cap` is reached.
EquilibriumResult FixedPriceEquilibrium(const PriceGrid& grid, double c1,
                                        double c2, const DemandFunction& demand,
                                        std::pair<double, double> start,
                                        int cap = 1000);

// ---------------------------------------------------------------------------
// Environments.

enum class EnvironmentKind { kClosedFormDuopoly, kMonteCarlo, kScripted };

struct EnvironmentConfig {
  EnvironmentKind kind = EnvironmentKind::kClosedFormDuopoly;
  BuyerModel buyer;
  std::size_t samples_per_round = 1;
  // Replace each observed demand by a Bernoulli(demand) sale.
  bool bernoulli_sales = false;
  // kScripted only: script[seller][step][level], replayed cyclically.
  std::vector<std::vector<std::vector<double>>> script;
  std::uint64_t seed = 0;

  int num_sellers() const;
};

inline constexpr const char* kEnvironmentFormat = "cpt-env/1";

EnvironmentConfig ParseEnvironmentConfig(const nlohmann::json& j);
nlohmann::json EnvironmentConfigToJson(const EnvironmentConfig& cfg);
EnvironmentConfig LoadEnvironmentConfig(const std::string& path);

// Everything random about one round. A pure function of (seed, round).
struct RoundState {
  std::uint64_t round = 0;
  int signal = -1;  // -1 when the buyer model has no signal
  std::vector<double> valuations;     // samples x sellers, row-major
  std::vector<double> sale_uniforms;  // one per seller
};

class MarketEnvironment {
 public:
  MarketEnvironment(EnvironmentConfig config, PriceGrid grid);

  int num_sellers() const { return config_.num_sellers(); }
  const EnvironmentConfig& config() const { return config_; }
  const PriceGrid& grid() const { return grid_; }

  RoundState Draw(std::uint64_t round) const;

  // Expected demand x^t_i at the full price profile.
  double ExpectedDemand(const RoundState& state, int seller,
                        std::span<const double> prices) const;
  // What the seller records: the expected demand, or a Bernoulli sale.
  double ObservedDemand(const RoundState& state, int seller,
                        double expected) const;
  // x^t_i(p) for every grid level p, other prices held fixed.
  std::vector<double> DemandCurve(const RoundState& state, int seller,
                                  std::span<const double> prices) const;
  std::optional<int> SignalFor(const RoundState& state, int seller) const;

 private:
  EnvironmentConfig config_;
  PriceGrid grid_;
};

}  // namespace colaudit::market

#endif  // COLAUDIT_MARKET_H_
