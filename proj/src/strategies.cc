#include "colaudit/strategies.h"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace colaudit::strategies {
namespace {

void Require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

// Softmax of -eta * losses, shifted by the minimum for stability, mixed with
// gamma of uniform. Writes into `out`.
void ExponentialWeights(std::span<const double> losses, double eta,
                        double gamma, std::span<double> out) {
  const std::size_t k = losses.size();
  const double lo = *std::min_element(losses.begin(), losses.end());
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = std::exp(-eta * (losses[i] - lo));
    total += out[i];
  }
  const double uniform = gamma / static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = (1.0 - gamma) * out[i] / total + uniform;
  }
}

}  // namespace

PriceDistribution::PriceDistribution(std::vector<double> probs)
    : probs_(std::move(probs)) {
  Require(!probs_.empty(), "distribution needs at least one level");
  double total = 0.0;
  for (double p : probs_) {
    Require(std::isfinite(p) && p >= 0.0,
            "probabilities must be finite and nonnegative");
    total += p;
  }
  Require(std::abs(total - 1.0) <= 1e-9, "probabilities must sum to one");
  if (std::abs(total - 1.0) > 1e-12) {
    for (double& p : probs_) p /= total;
  }
}

PriceDistribution PriceDistribution::Uniform(std::size_t k) {
  return PriceDistribution(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

PriceDistribution PriceDistribution::PointMass(std::size_t k,
                                               std::size_t index) {
  Require(index < k, "point mass index out of range");
  std::vector<double> p(k, 0.0);
  p[index] = 1.0;
  return PriceDistribution(std::move(p));
}

double PriceDistribution::Min() const {
  return *std::min_element(probs_.begin(), probs_.end());
}

Decision SellerAgent::Decide(const RoundContext& ctx) {
  PriceDistribution pi = NextDistribution(ctx);
  const std::size_t index = rng_.Categorical(pi.probs());
  PriceDistribution reported = ReportedDistribution(ctx);
  return {std::move(reported), index};
}

double RewardScale::Reward(double price, double demand) const {
  return std::max(0.0, (price - cost) * demand) / max_price;
}

double LearningRate::At(std::uint64_t t, std::size_t k) const {
  if (kind == Kind::kConstant) return value;
  if (k < 2) return 0.0;
  const double kd = static_cast<double>(k);
  return value * std::sqrt(std::log(kd) / (kd * static_cast<double>(t)));
}

// ---------------------------------------------------------------------------

FixedPriceAgent::FixedPriceAgent(const market::PriceGrid& grid, double price)
    : SellerAgent(0), k_(grid.size()), index_(grid.RequireIndex(price)) {}

PriceDistribution FixedPriceAgent::NextDistribution(const RoundContext&) {
  return PriceDistribution::PointMass(k_, index_);
}

std::pair<std::unique_ptr<SellerAgent>, std::unique_ptr<SellerAgent>>
CollusivePair(const market::PriceGrid& grid, double p1, double p2) {
  return {std::make_unique<FixedPriceAgent>(grid, p1),
          std::make_unique<FixedPriceAgent>(grid, p2)};
}

PrivateSignalColluder::PrivateSignalColluder(const market::PriceGrid& grid,
                                             double p_low, double p_high,
                                             double low_signal_probability)
    : SellerAgent(0),
      k_(grid.size()),
      low_(grid.RequireIndex(p_low)),
      high_(grid.RequireIndex(p_high)),
      low_probability_(low_signal_probability) {
  Require(low_probability_ > 0.0 && low_probability_ < 1.0,
          "low-signal probability must lie in (0, 1)");
}

PriceDistribution PrivateSignalColluder::NextDistribution(
    const RoundContext& ctx) {
  if (!ctx.signal) {
    throw std::logic_error(
        "private-signal colluder needs the environment to expose the "
        "low-valuation signal to it");
  }
  return PriceDistribution::PointMass(
      k_, *ctx.signal == market::kSignalLow ? low_ : high_);
}

PriceDistribution PrivateSignalColluder::ReportedDistribution(
    const RoundContext&) {
  std::vector<double> p(k_, 0.0);
  p[low_] += low_probability_;
  p[high_] += 1.0 - low_probability_;
  return PriceDistribution(std::move(p));
}

// ---------------------------------------------------------------------------

Exp3Agent::Exp3Agent(const market::PriceGrid& grid, RewardScale scale,
                     LearningRate rate, std::uint64_t seed, double gamma)
    : SellerAgent(seed),
      levels_(grid.levels().begin(), grid.levels().end()),
      scale_(scale),
      rate_(rate),
      gamma_(gamma),
      loss_estimates_(grid.size(), 0.0) {
  Require(gamma_ >= 0.0 && gamma_ <= 1.0, "gamma must lie in [0, 1]");
  Require(scale_.max_price > 0.0, "max price must be positive");
}

PriceDistribution Exp3Agent::NextDistribution(const RoundContext&) {
  if (!cached_) {
    std::vector<double> p(levels_.size());
    ExponentialWeights(loss_estimates_, rate_.At(t_, levels_.size()), gamma_, p);
    cached_.emplace(std::move(p));
  }
  return *cached_;
}

void Exp3Agent::Observe(std::size_t price_index, double demand) {
  const PriceDistribution pi = NextDistribution(RoundContext{t_, {}});
  const double loss = 1.0 - scale_.Reward(levels_[price_index], demand);
  loss_estimates_[price_index] += loss / pi[price_index];
  ++t_;
  cached_.reset();
}

// ---------------------------------------------------------------------------

PriceDistribution StationaryDistribution(std::span<const double> q,
                                         std::size_t k,
                                         StationaryOptions options,
                                         std::span<const double> start) {
  Require(q.size() == k * k, "Q must be k x k");
  for (std::size_t j = 0; j < k; ++j) {
    double row = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      Require(q[j * k + i] >= 0.0, "Q entries must be nonnegative");
      row += q[j * k + i];
    }
    Require(std::abs(row - 1.0) <= 1e-9, "Q rows must sum to one");
  }
  std::vector<double> pi(k, 1.0 / static_cast<double>(k));
  if (!start.empty()) {
    Require(start.size() == k, "start vector has the wrong length");
    pi.assign(start.begin(), start.end());
  }
  std::vector<double> next(k);
  for (int it = 0; it <= options.cap; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      const double w = pi[j];
      if (w == 0.0) continue;
      const double* row = q.data() + j * k;
      for (std::size_t i = 0; i < k; ++i) next[i] += w * row[i];
    }
    double residual = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      residual = std::max(residual, std::abs(next[i] - pi[i]));
    }
    if (residual <= options.tol) return PriceDistribution(std::move(pi));
    if (it == options.cap) break;
    pi.swap(next);
  }
  throw market::NonConvergenceError(
      "stationary distribution did not converge within the iteration cap");
}

CalibratedAgent::CalibratedAgent(const market::PriceGrid& grid,
                                 RewardScale scale, std::uint64_t seed,
                                 CalibratedOptions options)
    : SellerAgent(seed),
      levels_(grid.levels().begin(), grid.levels().end()),
      scale_(scale),
      options_(options),
      losses_(grid.size() * grid.size(), 0.0),
      q_(grid.size() * grid.size()),
      pi_(grid.size(), 1.0 / static_cast<double>(grid.size())) {
  Require(options_.gamma > 0.0 && options_.gamma <= 1.0,
          "sub-learner gamma must lie in (0, 1]");
  Require(scale_.max_price > 0.0, "max price must be positive");
}

void CalibratedAgent::Refresh() {
  if (fresh_) return;
  const std::size_t k = levels_.size();
  const double eta = options_.rate.At(t_, k);
  for (std::size_t j = 0; j < k; ++j) {
    ExponentialWeights(std::span<const double>(losses_).subspan(j * k, k), eta,
                       options_.gamma, std::span<double>(q_).subspan(j * k, k));
  }
  try {
    PriceDistribution pi =
        StationaryDistribution(q_, k, options_.stationary, pi_);
    pi_.assign(pi.probs().begin(), pi.probs().end());
  } catch (const market::NonConvergenceError&) {
    if (fallbacks_ == 0) {
      std::clog << "warning: calibrated learner stationary solve failed at "
                   "round "
                << t_ << "; playing uniform\n";
    }
    ++fallbacks_;
    std::fill(pi_.begin(), pi_.end(), 1.0 / static_cast<double>(k));
  }
  fresh_ = true;
}

PriceDistribution CalibratedAgent::NextDistribution(const RoundContext&) {
  Refresh();
  return PriceDistribution(pi_);
}

void CalibratedAgent::Observe(std::size_t price_index, double demand) {
  Refresh();
  const std::size_t k = levels_.size();
  const double loss = 1.0 - scale_.Reward(levels_[price_index], demand);
  const double estimate = loss / pi_[price_index];
  for (std::size_t j = 0; j < k; ++j) {
    losses_[j * k + price_index] += pi_[j] * estimate;
  }
  ++t_;
  fresh_ = false;
}

// ---------------------------------------------------------------------------

AugmentedAgent::AugmentedAgent(std::unique_ptr<SellerAgent> inner,
                               double floor, std::uint64_t seed)
    : SellerAgent(seed), inner_(std::move(inner)), floor_(floor) {
  Require(inner_ != nullptr, "augmented agent needs an inner agent");
  Require(floor_ >= 0.0, "exploration floor must be nonnegative");
  explore_probability_ = static_cast<double>(inner_->num_levels()) * floor_;
  Require(explore_probability_ < 1.0, "k * floor must be below one");
}

PriceDistribution AugmentedAgent::Mix(const PriceDistribution& inner) const {
  std::vector<double> p(inner.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = (1.0 - explore_probability_) * inner[i] + floor_;
  }
  return PriceDistribution(std::move(p));
}

PriceDistribution AugmentedAgent::NextDistribution(const RoundContext& ctx) {
  RoundContext inner_ctx{inner_calls_ + 1, ctx.signal};
  return Mix(inner_->NextDistribution(inner_ctx));
}

PriceDistribution AugmentedAgent::ReportedDistribution(const RoundContext& ctx) {
  RoundContext inner_ctx{inner_calls_ + 1, ctx.signal};
  return Mix(inner_->ReportedDistribution(inner_ctx));
}

Decision AugmentedAgent::Decide(const RoundContext& ctx) {
  ++rounds_;
  RoundContext inner_ctx{inner_calls_ + 1, ctx.signal};
  if (rng_.Uniform() < explore_probability_) {
    last_was_inner_ = false;
    const std::size_t index = rng_.Index(num_levels());
    return {Mix(inner_->ReportedDistribution(inner_ctx)), index};
  }
  last_was_inner_ = true;
  ++inner_calls_;
  Decision d = inner_->Decide(inner_ctx);
  return {Mix(d.reported), d.price_index};
}

void AugmentedAgent::Observe(std::size_t price_index, double demand) {
  if (last_was_inner_) inner_->Observe(price_index, demand);
  last_was_inner_ = false;
}

}  // namespace colaudit::strategies
