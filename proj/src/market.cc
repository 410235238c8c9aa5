#include "colaudit/market.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "colaudit/kernels.h"
#include "colaudit/rng.h"

namespace colaudit::market {
namespace {

void Require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

// Antiderivative of clamp(y, 0, b).
double ClampIntegral(double y, double b) {
  if (y <= 0.0) return 0.0;
  if (y <= b) return 0.5 * y * y;
  return 0.5 * b * b + b * (y - b);
}

}  // namespace

PriceGrid::PriceGrid(std::vector<double> levels, double cost_lo,
                     double cost_hi)
    : levels_(std::move(levels)), cost_lo_(cost_lo), cost_hi_(cost_hi) {
  Require(!levels_.empty(), "price grid needs at least one level");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    Require(std::isfinite(levels_[i]) && levels_[i] >= 0.0,
            "price levels must be finite and nonnegative");
    if (i > 0) {
      Require(levels_[i] > levels_[i - 1],
              "price levels must be strictly increasing");
    }
  }
  Require(cost_lo_ >= 0.0 && cost_lo_ <= cost_hi_ && cost_hi_ <= max_price(),
          "cost bounds must satisfy 0 <= lo <= hi <= max price");
}

PriceGrid PriceGrid::Uniform(double lo, double hi, std::size_t count,
                             double cost_lo, double cost_hi) {
  Require(count >= 1, "grid needs at least one level");
  std::vector<double> levels(count);
  if (count == 1) {
    levels[0] = hi;
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      levels[i] = lo + (hi - lo) * static_cast<double>(i) /
                           static_cast<double>(count - 1);
    }
  }
  return PriceGrid(std::move(levels), cost_lo, cost_hi);
}

std::optional<std::size_t> PriceGrid::IndexOf(double price, double tol) const {
  auto it = std::lower_bound(levels_.begin(), levels_.end(), price - tol);
  if (it != levels_.end() && std::abs(*it - price) <= tol) {
    return static_cast<std::size_t>(it - levels_.begin());
  }
  return std::nullopt;
}

std::size_t PriceGrid::RequireIndex(double price) const {
  auto idx = IndexOf(price);
  if (!idx) {
    std::ostringstream os;
    os << "price " << price << " is not a grid level";
    throw std::invalid_argument(os.str());
  }
  return *idx;
}

double UniformDuopolyDemand(double p_own, double p_other) {
  Require(p_own >= 0.0 && p_own <= 1.0 && p_other >= 0.0 && p_other <= 1.0,
          "duopoly prices must lie in [0, 1]");
  if (p_own >= p_other) {
    return 0.5 * (1.0 - p_own) * (1.0 - p_own) + p_other * (1.0 - p_own);
  }
  return 0.5 * (1.0 - p_other * p_other) + (p_other - p_own);
}

double BoxDemandArea(double p_own, double p_other, double own_hi,
                     double other_hi) {
  // Integrate over v_own in [p_own, own_hi] the length of
  // {v_other in [0, other_hi] : v_other <= v_own - p_own + p_other}.
  if (own_hi <= p_own) return 0.0;
  const double shift = p_other - p_own;
  return ClampIntegral(own_hi + shift, other_hi) -
         ClampIntegral(p_own + shift, other_hi);
}

double UniformBoxDemand(double p_own, double p_other, double own_hi,
                        double other_hi) {
  Require(own_hi > 0.0 && other_hi > 0.0, "valuation box must be nondegenerate");
  return BoxDemandArea(p_own, p_other, own_hi, other_hi) / (own_hi * other_hi);
}

double DuopolyTotalProfit(double p1, double p2, double c1, double c2) {
  return (p1 - c1) * UniformDuopolyDemand(p1, p2) +
         (p2 - c2) * UniformDuopolyDemand(p2, p1);
}

int LowValuationSignal::Evaluate(std::span<const double> valuations) const {
  for (std::size_t i = 0; i < thresholds.size() && i < valuations.size(); ++i) {
    if (valuations[i] > thresholds[i]) return kSignalHigh;
  }
  return kSignalLow;
}

bool LowValuationSignal::ObservedBy(int seller) const {
  return std::find(observers.begin(), observers.end(), seller) !=
         observers.end();
}

void BuyerModel::Valuations(std::span<const double> uniforms,
                            std::span<double> out) const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = kind == Kind::kPoint ? values[i] : uniforms[i] * values[i];
  }
}

int BuyerChoice(std::span<const double> valuations,
                std::span<const double> prices) {
  int best = -1;
  double best_surplus = 0.0;
  for (std::size_t i = 0; i < prices.size(); ++i) {
    const double surplus = valuations[i] - prices[i];
    if (surplus < 0.0) continue;
    if (best < 0 || surplus > best_surplus) {
      best = static_cast<int>(i);
      best_surplus = surplus;
    }
  }
  return best;
}

std::vector<double> SampleDemandMonteCarlo(const BuyerModel& buyer,
                                           std::span<const double> prices,
                                           std::size_t n_samples,
                                           std::uint64_t seed) {
  Require(n_samples >= 1, "need at least one Monte Carlo sample");
  Require(prices.size() == buyer.values.size(),
          "one price per seller is required");
  const auto counts = kernels::MonteCarloPurchaseCounts(buyer, prices,
                                                        n_samples, seed);
  std::vector<double> demand(prices.size());
  for (std::size_t i = 0; i < prices.size(); ++i) {
    demand[i] = static_cast<double>(counts[i]) / static_cast<double>(n_samples);
  }
  return demand;
}

double BestResponsePrice(const PriceGrid& grid, double cost,
                         double opponent_price, const DemandFunction& demand) {
  Require(cost >= 0.0 && cost <= grid.max_price(),
          "cost must lie in [0, max price]");
  double best_price = grid.level(0);
  double best_profit = (best_price - cost) * demand(best_price, opponent_price);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double p = grid.level(i);
    const double profit = (p - cost) * demand(p, opponent_price);
    if (profit > best_profit) {
      best_profit = profit;
      best_price = p;
    }
  }
  return best_price;
}

EquilibriumResult FixedPriceEquilibrium(const PriceGrid& grid, double c1,
                                        double c2, const DemandFunction& demand,
                                        std::pair<double, double> start,
                                        int cap) {
  std::set<std::pair<double, double>> seen;
  std::pair<double, double> current = start;
  for (int it = 1; it <= cap; ++it) {
    const double p1 = BestResponsePrice(grid, c1, current.second, demand);
    const double p2 = BestResponsePrice(grid, c2, p1, demand);
    const std::pair<double, double> next{p1, p2};
    if (next == current) return {p1, p2, it};
    if (!seen.insert(next).second) {
      throw NonConvergenceError("best-response dynamics entered a cycle");
    }
    current = next;
  }
  throw NonConvergenceError("best-response dynamics hit the iteration cap");
}

// ---------------------------------------------------------------------------

int EnvironmentConfig::num_sellers() const {
  if (kind == EnvironmentKind::kScripted) return static_cast<int>(script.size());
  return buyer.num_sellers();
}

namespace {

EnvironmentKind ParseKind(const std::string& s) {
  if (s == "closed_form_duopoly") return EnvironmentKind::kClosedFormDuopoly;
  if (s == "monte_carlo") return EnvironmentKind::kMonteCarlo;
  if (s == "scripted_adversarial") return EnvironmentKind::kScripted;
  throw std::invalid_argument("unknown environment kind: " + s);
}

const char* KindName(EnvironmentKind k) {
  switch (k) {
    case EnvironmentKind::kClosedFormDuopoly: return "closed_form_duopoly";
    case EnvironmentKind::kMonteCarlo: return "monte_carlo";
    case EnvironmentKind::kScripted: return "scripted_adversarial";
  }
  return "?";
}

void ValidateConfig(const EnvironmentConfig& cfg) {
  Require(cfg.samples_per_round >= 1, "samples_per_round must be >= 1");
  if (cfg.kind == EnvironmentKind::kScripted) {
    Require(!cfg.script.empty(), "scripted environment needs a script");
    for (const auto& seller : cfg.script) {
      Require(!seller.empty(), "each seller's script needs a step");
      for (const auto& curve : seller) {
        for (double x : curve) {
          Require(x >= 0.0 && x <= 1.0, "scripted demands must lie in [0, 1]");
        }
      }
    }
    return;
  }
  const auto& b = cfg.buyer;
  Require(b.values.size() >= 1, "buyer model needs at least one seller");
  for (double v : b.values) {
    Require(v >= 0.0 && v <= 1.0, "valuation parameters must lie in [0, 1]");
    if (b.kind == BuyerModel::Kind::kUniformBox) {
      Require(v > 0.0, "uniform valuation bounds must be positive");
    }
  }
  if (b.signal) {
    Require(b.signal->thresholds.size() == b.values.size(),
            "signal needs one threshold per seller");
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      Require(b.signal->thresholds[i] > 0.0 &&
                  b.signal->thresholds[i] <= b.values[i],
              "signal thresholds must lie in (0, upper bound]");
    }
    for (int o : b.signal->observers) {
      Require(o >= 0 && o < b.num_sellers(), "signal observer out of range");
    }
    Require(cfg.kind != EnvironmentKind::kMonteCarlo ||
                cfg.samples_per_round == 1,
            "signals need one buyer per round");
  }
  if (cfg.kind == EnvironmentKind::kClosedFormDuopoly) {
    Require(b.num_sellers() == 2, "closed-form demand is duopoly only");
    Require(b.kind == BuyerModel::Kind::kUniformBox,
            "closed-form demand needs uniform valuations");
  }
}

}  // namespace

EnvironmentConfig ParseEnvironmentConfig(const nlohmann::json& j) {
  EnvironmentConfig cfg;
  if (j.contains("format") && j.at("format").get<std::string>() != kEnvironmentFormat) {
    throw std::invalid_argument("unsupported environment format: " +
                                j.at("format").get<std::string>());
  }
  cfg.kind = ParseKind(j.at("kind").get<std::string>());
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.bernoulli_sales = j.value("bernoulli_sales", false);
  cfg.samples_per_round = j.value("samples_per_round", std::size_t{1});
  if (j.contains("valuations")) {
    const auto& v = j.at("valuations");
    const std::string kind = v.value("kind", std::string("uniform"));
    if (kind == "uniform") {
      cfg.buyer.kind = BuyerModel::Kind::kUniformBox;
      cfg.buyer.values = v.value("upper", std::vector<double>{1.0, 1.0});
    } else if (kind == "point") {
      cfg.buyer.kind = BuyerModel::Kind::kPoint;
      cfg.buyer.values = v.at("values").get<std::vector<double>>();
    } else {
      throw std::invalid_argument("unknown valuation kind: " + kind);
    }
  }
  if (j.contains("signal") && !j.at("signal").is_null()) {
    const auto& s = j.at("signal");
    const std::string kind = s.value("kind", std::string("low_valuation"));
    if (kind != "low_valuation") {
      throw std::invalid_argument("unknown signal kind: " + kind);
    }
    LowValuationSignal sig;
    sig.thresholds = s.at("thresholds").get<std::vector<double>>();
    sig.observers = s.value("observers", std::vector<int>{0});
    cfg.buyer.signal = std::move(sig);
  }
  if (j.contains("script")) {
    cfg.script = j.at("script").get<std::vector<std::vector<std::vector<double>>>>();
  }
  ValidateConfig(cfg);
  return cfg;
}

nlohmann::json EnvironmentConfigToJson(const EnvironmentConfig& cfg) {
  nlohmann::json j;
  j["format"] = kEnvironmentFormat;
  j["kind"] = KindName(cfg.kind);
  j["seed"] = cfg.seed;
  j["bernoulli_sales"] = cfg.bernoulli_sales;
  j["samples_per_round"] = cfg.samples_per_round;
  if (cfg.kind == EnvironmentKind::kScripted) {
    j["script"] = cfg.script;
  } else {
    if (cfg.buyer.kind == BuyerModel::Kind::kUniformBox) {
      j["valuations"] = {{"kind", "uniform"}, {"upper", cfg.buyer.values}};
    } else {
      j["valuations"] = {{"kind", "point"}, {"values", cfg.buyer.values}};
    }
    if (cfg.buyer.signal) {
      j["signal"] = {{"kind", "low_valuation"},
                     {"thresholds", cfg.buyer.signal->thresholds},
                     {"observers", cfg.buyer.signal->observers}};
    }
  }
  return j;
}

EnvironmentConfig LoadEnvironmentConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open environment file: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (!j.contains("format")) {
    throw std::invalid_argument("environment file lacks a format tag");
  }
  return ParseEnvironmentConfig(j);
}

// ---------------------------------------------------------------------------

MarketEnvironment::MarketEnvironment(EnvironmentConfig config, PriceGrid grid)
    : config_(std::move(config)), grid_(std::move(grid)) {
  ValidateConfig(config_);
  if (config_.kind == EnvironmentKind::kScripted) {
    for (const auto& seller : config_.script) {
      for (const auto& curve : seller) {
        Require(curve.size() == grid_.size(),
                "scripted demand curves need one entry per grid level");
      }
    }
  }
}

RoundState MarketEnvironment::Draw(std::uint64_t round) const {
  RoundState state;
  state.round = round;
  const std::uint64_t stream = DeriveSeed(config_.seed, round);
  const int n = num_sellers();
  std::uint64_t counter = 0;
  state.sale_uniforms.resize(n);
  for (int i = 0; i < n; ++i) {
    state.sale_uniforms[i] = CounterUniform(stream, counter++);
  }
  if (config_.kind == EnvironmentKind::kScripted) return state;

  const bool needs_buyers =
      config_.kind == EnvironmentKind::kMonteCarlo || config_.buyer.signal;
  if (!needs_buyers) return state;
  const std::size_t samples =
      config_.kind == EnvironmentKind::kMonteCarlo ? config_.samples_per_round
                                                   : 1;
  state.valuations.resize(samples * n);
  std::vector<double> u(n);
  for (std::size_t s = 0; s < samples; ++s) {
    for (int i = 0; i < n; ++i) u[i] = CounterUniform(stream, counter++);
    config_.buyer.Valuations(u, std::span<double>(state.valuations).subspan(s * n, n));
  }
  if (config_.buyer.signal) {
    state.signal = config_.buyer.signal->Evaluate(
        std::span<const double>(state.valuations).subspan(0, n));
  }
  return state;
}

double MarketEnvironment::ExpectedDemand(const RoundState& state, int seller,
                                         std::span<const double> prices) const {
  const int n = num_sellers();
  switch (config_.kind) {
    case EnvironmentKind::kScripted: {
      const auto& steps = config_.script[seller];
      const auto& curve = steps[(state.round - 1) % steps.size()];
      return curve[grid_.RequireIndex(prices[seller])];
    }
    case EnvironmentKind::kMonteCarlo: {
      const std::size_t samples = state.valuations.size() / n;
      std::size_t wins = 0;
      for (std::size_t s = 0; s < samples; ++s) {
        auto v = std::span<const double>(state.valuations).subspan(s * n, n);
        if (BuyerChoice(v, prices) == seller) ++wins;
      }
      return static_cast<double>(wins) / static_cast<double>(samples);
    }
    case EnvironmentKind::kClosedFormDuopoly: {
      const int other = 1 - seller;
      const double own_hi = config_.buyer.values[seller];
      const double other_hi = config_.buyer.values[other];
      const double p_own = prices[seller];
      const double p_other = prices[other];
      if (state.signal < 0) {
        return UniformBoxDemand(p_own, p_other, own_hi, other_hi);
      }
      const auto& th = config_.buyer.signal->thresholds;
      const double low_area =
          BoxDemandArea(p_own, p_other, th[seller], th[other]);
      const double low_mass = th[seller] * th[other];
      if (state.signal == kSignalLow) return low_area / low_mass;
      const double full_area = BoxDemandArea(p_own, p_other, own_hi, other_hi);
      const double high_mass = own_hi * other_hi - low_mass;
      if (high_mass <= 0.0) return 0.0;
      return std::clamp((full_area - low_area) / high_mass, 0.0, 1.0);
    }
  }
  return 0.0;
}

double MarketEnvironment::ObservedDemand(const RoundState& state, int seller,
                                         double expected) const {
  if (!config_.bernoulli_sales) return expected;
  return state.sale_uniforms[seller] < expected ? 1.0 : 0.0;
}

std::vector<double> MarketEnvironment::DemandCurve(
    const RoundState& state, int seller, std::span<const double> prices) const {
  std::vector<double> profile(prices.begin(), prices.end());
  std::vector<double> curve(grid_.size());
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    profile[seller] = grid_.level(i);
    curve[i] = ExpectedDemand(state, seller, profile);
  }
  return curve;
}

std::optional<int> MarketEnvironment::SignalFor(const RoundState& state,
                                                int seller) const {
  if (state.signal < 0 || !config_.buyer.signal) return std::nullopt;
  if (!config_.buyer.signal->ObservedBy(seller)) return std::nullopt;
  return state.signal;
}

}  // namespace colaudit::market
