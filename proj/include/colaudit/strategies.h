#ifndef COLAUDIT_STRATEGIES_H_
#define COLAUDIT_STRATEGIES_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "colaudit/market.h"
#include "colaudit/rng.h"

namespace colaudit::strategies {

// A point of the probability simplex over the k grid levels.
class PriceDistribution {
 public:
  // Rejects negative or non-finite entries and totals more than 1e-9 from
  // one; smaller drift above 1e-12 is rescaled away.
  explicit PriceDistribution(std::vector<double> probs);

  static PriceDistribution Uniform(std::size_t k);
  static PriceDistribution PointMass(std::size_t k, std::size_t index);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }
  double Min() const;

  bool operator==(const PriceDistribution&) const = default;

 private:
  std::vector<double> probs_;
};

// What an agent may see at decision time: the round number and any signal
// the environment declares observable to this seller. Opponent prices and
// counterfactual demand are deliberately absent.
struct RoundContext {
  std::uint64_t round = 1;
  std::optional<int> signal;
};

struct Decision {
  PriceDistribution reported;  // logged as pi^t
  std::size_t price_index;     // posted p^t
};

class SellerAgent {
 public:
  virtual ~SellerAgent() = default;

  virtual std::size_t num_levels() const = 0;
  virtual std::string name() const = 0;

  // Law of the price this agent would post now. Does not advance its state.
  virtual PriceDistribution NextDistribution(const RoundContext& ctx) = 0;

  // Distribution written to the transcript. Defaults to NextDistribution.
  virtual PriceDistribution ReportedDistribution(const RoundContext& ctx) {
    return NextDistribution(ctx);
  }

  // Draws this round's price.
  virtual Decision Decide(const RoundContext& ctx);

  // Bandit feedback for the round just decided: own price and own demand.
  virtual void Observe(std::size_t price_index, double demand) = 0;

 protected:
  explicit SellerAgent(std::uint64_t seed) : rng_(seed) {}
  Rng rng_;
};

// Bandit reward in [0, 1]: max(0, (p - cost) * demand) / max price.
struct RewardScale {
  double cost = 0.0;
  double max_price = 1.0;

  double Reward(double price, double demand) const;
};

struct LearningRate {
  enum class Kind { kAnytime, kConstant };
  Kind kind = Kind::kAnytime;
  // kAnytime: eta_t = value * sqrt(ln k / (k t)); kConstant: eta_t = value.
  double value = 1.0;

  double At(std::uint64_t t, std::size_t k) const;
};

class FixedPriceAgent : public SellerAgent {
 public:
  FixedPriceAgent(const market::PriceGrid& grid, double price);

  std::size_t num_levels() const override { return k_; }
  std::string name() const override { return "fixed"; }
  PriceDistribution NextDistribution(const RoundContext&) override;
  void Observe(std::size_t, double) override {}

  std::size_t price_index() const { return index_; }

 private:
  std::size_t k_;
  std::size_t index_;
};

std::pair<std::unique_ptr<SellerAgent>, std::unique_ptr<SellerAgent>>
CollusivePair(const market::PriceGrid& grid, double p1, double p2);

// Posts p_low on rounds whose signal is kSignalLow and p_high otherwise. The
// transcript sees the unconditional mixture implied by the signal frequency.
class PrivateSignalColluder : public SellerAgent {
 public:
  PrivateSignalColluder(const market::PriceGrid& grid, double p_low,
                        double p_high, double low_signal_probability);

  std::size_t num_levels() const override { return k_; }
  std::string name() const override { return "private_signal_colluder"; }
  PriceDistribution NextDistribution(const RoundContext& ctx) override;
  PriceDistribution ReportedDistribution(const RoundContext& ctx) override;
  void Observe(std::size_t, double) override {}

 private:
  std::size_t k_;
  std::size_t low_;
  std::size_t high_;
  double low_probability_;
};

// Exp3 over losses 1 - reward, with importance-weighted loss estimates and
// an optional uniform exploration mixture `gamma`.
class Exp3Agent : public SellerAgent {
 public:
  Exp3Agent(const market::PriceGrid& grid, RewardScale scale,
            LearningRate rate, std::uint64_t seed, double gamma = 0.0);

  std::size_t num_levels() const override { return levels_.size(); }
  std::string name() const override { return "exp3"; }
  PriceDistribution NextDistribution(const RoundContext& ctx) override;
  void Observe(std::size_t price_index, double demand) override;

 private:
  std::vector<double> levels_;
  RewardScale scale_;
  LearningRate rate_;
  double gamma_;
  std::vector<double> loss_estimates_;
  std::uint64_t t_ = 1;
  std::optional<PriceDistribution> cached_;
};

struct StationaryOptions {
  double tol = 1e-10;
  int cap = 10000;
};

// pi with ||pi Q - pi||_inf <= tol, by power iteration from `start`
// (uniform when empty). Q is row-major k x k and row-stochastic.
// Throws market::NonConvergenceError when the cap is exceeded.
PriceDistribution StationaryDistribution(std::span<const double> q,
                                         std::size_t k,
                                         StationaryOptions options = {},
                                         std::span<const double> start = {});

struct CalibratedOptions {
  LearningRate rate;
  // Uniform mixture inside each sub-learner; keeps Q irreducible.
  double gamma = 0.01;
  StationaryOptions stationary;
};

// Swap-regret learner by reduction to k external-regret sub-learners: row j
// of Q is the recommendation of sub-learner j, the posted law is the
// stationary distribution of Q, and sub-learner j is charged pi(j) times the
// importance-weighted loss.
class CalibratedAgent : public SellerAgent {
 public:
  CalibratedAgent(const market::PriceGrid& grid, RewardScale scale,
                  std::uint64_t seed, CalibratedOptions options = {});

  std::size_t num_levels() const override { return levels_.size(); }
  std::string name() const override { return "calibrated"; }
  PriceDistribution NextDistribution(const RoundContext& ctx) override;
  void Observe(std::size_t price_index, double demand) override;

  // Rounds on which the stationary solver failed and uniform was played.
  std::uint64_t solver_fallbacks() const { return fallbacks_; }
  // Current recommendation matrix (row-major), for inspection.
  const std::vector<double>& recommendation_matrix() const { return q_; }

 private:
  void Refresh();

  std::vector<double> levels_;
  RewardScale scale_;
  CalibratedOptions options_;
  std::vector<double> losses_;  // k x k: sub-learner j, level p
  std::vector<double> q_;
  std::vector<double> pi_;
  std::uint64_t t_ = 1;
  bool fresh_ = false;
  std::uint64_t fallbacks_ = 0;
};

class UniformAgent : public SellerAgent {
 public:
  explicit UniformAgent(std::size_t k, std::uint64_t seed)
      : SellerAgent(seed), k_(k) {}
  std::size_t num_levels() const override { return k_; }
  std::string name() const override { return "uniform"; }
  PriceDistribution NextDistribution(const RoundContext&) override {
    return PriceDistribution::Uniform(k_);
  }
  void Observe(std::size_t, double) override {}

 private:
  std::size_t k_;
};

// With probability k * floor posts a uniform price without consulting the
// inner agent; otherwise delegates. Reports the full mixture
// (1 - k floor) pi_inner + floor, so every reported probability is at least
// `floor`. The inner agent only sees the rounds it was called on.
class AugmentedAgent : public SellerAgent {
 public:
  AugmentedAgent(std::unique_ptr<SellerAgent> inner, double floor,
                 std::uint64_t seed);

  std::size_t num_levels() const override { return inner_->num_levels(); }
  std::string name() const override { return "augmented_" + inner_->name(); }
  PriceDistribution NextDistribution(const RoundContext& ctx) override;
  PriceDistribution ReportedDistribution(const RoundContext& ctx) override;
  Decision Decide(const RoundContext& ctx) override;
  void Observe(std::size_t price_index, double demand) override;

  double floor() const { return floor_; }
  std::uint64_t inner_calls() const { return inner_calls_; }
  std::uint64_t rounds() const { return rounds_; }
  SellerAgent& inner() { return *inner_; }

 private:
  PriceDistribution Mix(const PriceDistribution& inner) const;

  std::unique_ptr<SellerAgent> inner_;
  double floor_;
  double explore_probability_;
  bool last_was_inner_ = false;
  std::uint64_t inner_calls_ = 0;
  std::uint64_t rounds_ = 0;
};

}  // namespace colaudit::strategies

#endif  // COLAUDIT_STRATEGIES_H_
