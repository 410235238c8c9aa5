#include "colaudit/harness.h"

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <streambuf>

#include "colaudit/rng.h"

namespace colaudit::harness {
namespace {

namespace fs = std::filesystem;

void Require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

// Streambuf that hashes everything written to it (FNV-1a 64).
class DigestBuf : public std::streambuf {
 public:
  std::uint64_t digest() const { return hash_; }

 protected:
  int_type overflow(int_type ch) override {
    if (ch != traits_type::eof()) Mix(static_cast<unsigned char>(ch));
    return ch;
  }
  std::streamsize xsputn(const char* s, std::streamsize n) override {
    for (std::streamsize i = 0; i < n; ++i) Mix(static_cast<unsigned char>(s[i]));
    return n;
  }

 private:
  void Mix(unsigned char c) {
    hash_ ^= c;
    hash_ *= 0x100000001b3ULL;
  }
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

AgentSpec ParseAgent(const nlohmann::json& j) {
  AgentSpec a;
  a.kind = j.at("kind").get<std::string>();
  a.cost = j.value("cost", 0.0);
  a.price = j.value("price", 0.0);
  a.p_low = j.value("p_low", 0.0);
  a.p_high = j.value("p_high", 0.0);
  a.low_signal_probability = j.value("low_signal_probability", 0.25);
  a.gamma = j.value("gamma", -1.0);
  if (j.contains("learning_rate")) {
    const auto& lr = j.at("learning_rate");
    const std::string kind = lr.value("kind", std::string("anytime"));
    if (kind == "anytime") {
      a.rate.kind = strategies::LearningRate::Kind::kAnytime;
    } else if (kind == "constant") {
      a.rate.kind = strategies::LearningRate::Kind::kConstant;
    } else {
      throw std::invalid_argument("unknown learning-rate kind: " + kind);
    }
    a.rate.value = lr.value("value", 1.0);
  }
  if (j.contains("exploration_floor") && !j.at("exploration_floor").is_null()) {
    a.exploration_floor = j.at("exploration_floor").get<double>();
  }
  return a;
}

}  // namespace

Scenario ParseScenario(const nlohmann::json& j) {
  Require(j.value("format", std::string()) == kScenarioFormat,
          std::string("scenario format must be ") + kScenarioFormat);
  Scenario s;
  s.id = j.value("id", std::string("scenario"));
  const auto& g = j.at("grid");
  const auto bounds = g.value("cost_bounds", std::vector<double>{0.0, 0.0});
  Require(bounds.size() == 2, "cost_bounds needs two values");
  if (g.contains("levels")) {
    s.grid = market::PriceGrid(g.at("levels").get<std::vector<double>>(),
                               bounds[0], bounds[1]);
  } else {
    const auto& u = g.at("uniform");
    s.grid = market::PriceGrid::Uniform(u.at("lo").get<double>(),
                                        u.at("hi").get<double>(),
                                        u.at("count").get<std::size_t>(),
                                        bounds[0], bounds[1]);
  }
  if (j.contains("environment_file")) {
    s.environment =
        market::LoadEnvironmentConfig(j.at("environment_file").get<std::string>());
  } else {
    s.environment = market::ParseEnvironmentConfig(j.at("environment"));
  }
  for (const auto& a : j.at("agents")) s.agents.push_back(ParseAgent(a));
  Require(static_cast<int>(s.agents.size()) == s.environment.num_sellers(),
          "need exactly one agent per seller in the environment");
  const auto& h = j.at("horizon");
  if (h.contains("inner_calls")) {
    s.horizon = {Horizon::Kind::kInnerCalls, h.at("inner_calls").get<std::uint64_t>()};
  } else {
    s.horizon = {Horizon::Kind::kRounds, h.at("rounds").get<std::uint64_t>()};
  }
  Require(s.horizon.value >= 1, "horizon must be at least one round");
  if (j.contains("audit")) {
    const auto& a = j.at("audit");
    s.audit.alpha = a.value("alpha", 0.05);
    s.audit.target_regret = a.value("target_regret", 0.1);
    s.audit.exploration_requirement = a.value("exploration_requirement", 0.0);
    s.audited_seller = a.value("seller", 0);
  }
  Require(s.audited_seller >= 0 &&
              s.audited_seller < static_cast<int>(s.agents.size()),
          "audited seller out of range");
  s.audit.Validate(s.grid.size());
  s.replications = j.value("replications", std::size_t{1});
  Require(s.replications >= 1, "need at least one replication");
  s.seed = j.value("seed", std::uint64_t{0});
  s.output_dir = j.value("output_dir", "runs/" + s.id);
  s.write_transcripts = j.value("write_transcripts", true);
  s.oracle_all_sellers = j.value("oracle_all_sellers", false);
  s.keep_curves = j.value("keep_curves", false);
  return s;
}

Scenario LoadScenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  return ParseScenario(nlohmann::json::parse(in));
}

std::unique_ptr<strategies::SellerAgent> MakeAgent(const AgentSpec& spec,
                                                   const market::PriceGrid& grid,
                                                   std::uint64_t seed) {
  using namespace strategies;
  const RewardScale scale{spec.cost, grid.max_price()};
  std::unique_ptr<SellerAgent> agent;
  if (spec.kind == "fixed") {
    agent = std::make_unique<FixedPriceAgent>(grid, spec.price);
  } else if (spec.kind == "exp3") {
    agent = std::make_unique<Exp3Agent>(grid, scale, spec.rate, seed,
                                        spec.gamma < 0 ? 0.0 : spec.gamma);
  } else if (spec.kind == "calibrated") {
    CalibratedOptions options;
    options.rate = spec.rate;
    if (spec.gamma >= 0) options.gamma = spec.gamma;
    agent = std::make_unique<CalibratedAgent>(grid, scale, seed, options);
  } else if (spec.kind == "uniform") {
    agent = std::make_unique<UniformAgent>(grid.size(), seed);
  } else if (spec.kind == "private_signal_colluder") {
    agent = std::make_unique<PrivateSignalColluder>(
        grid, spec.p_low, spec.p_high, spec.low_signal_probability);
  } else {
    throw std::invalid_argument("unknown agent kind: " + spec.kind);
  }
  if (spec.exploration_floor) {
    agent = std::make_unique<AugmentedAgent>(std::move(agent),
                                             *spec.exploration_floor,
                                             DeriveSeed(seed, 7));
  }
  return agent;
}

SimulationError::SimulationError(int seller, std::uint64_t round,
                                 const std::string& what)
    : std::runtime_error("seller " + std::to_string(seller) + " failed at round " +
                         std::to_string(round) + ": " + what),
      seller_(seller),
      round_(round) {}

std::uint64_t ReplicationSeed(const Scenario& s, std::size_t replication) {
  return DeriveSeed(s.seed, replication);
}

ReplicationRun SimulateReplication(const Scenario& s, std::size_t replication) {
  ReplicationRun run;
  run.replication = replication;
  run.seed = ReplicationSeed(s, replication);

  market::EnvironmentConfig env_cfg = s.environment;
  env_cfg.seed = DeriveSeed(run.seed ^ s.environment.seed, 1);
  const market::MarketEnvironment env(env_cfg, s.grid);
  const int n = env.num_sellers();

  std::vector<std::unique_ptr<strategies::SellerAgent>> agents;
  for (int i = 0; i < n; ++i) {
    agents.push_back(MakeAgent(s.agents[i], s.grid, DeriveSeed(run.seed, 100 + i)));
    transcript::TranscriptMetadata meta{run.seed, s.id, std::nullopt};
    SellerRun seller{transcript::Transcript(s.grid, meta), std::nullopt, 0,
                     s.agents[i].cost};
    if (i == s.audited_seller || s.oracle_all_sellers) {
      seller.oracle.emplace(s.grid, s.keep_curves);
    }
    run.sellers.push_back(std::move(seller));
  }
  auto* audited = dynamic_cast<strategies::AugmentedAgent*>(
      agents[s.audited_seller].get());

  std::vector<std::size_t> posted(n);
  std::vector<double> prices(n);
  std::vector<strategies::PriceDistribution> reported;
  reported.reserve(n);
  const std::uint64_t cap = s.horizon.kind == Horizon::Kind::kRounds
                                ? s.horizon.value
                                : 1000 * s.horizon.value;
  std::uint64_t t = 0;
  while (true) {
    if (s.horizon.kind == Horizon::Kind::kRounds) {
      if (t >= s.horizon.value) break;
    } else {
      const std::uint64_t calls = audited ? audited->inner_calls() : t;
      if (calls >= s.horizon.value) break;
      if (t >= cap) {
        throw SimulationError(s.audited_seller, t,
                              "inner-call target not reached within cap");
      }
    }
    ++t;
    const market::RoundState state = env.Draw(t);
    reported.clear();
    for (int i = 0; i < n; ++i) {
      try {
        strategies::RoundContext ctx{t, env.SignalFor(state, i)};
        strategies::Decision d = agents[i]->Decide(ctx);
        posted[i] = d.price_index;
        prices[i] = s.grid.level(d.price_index);
        reported.push_back(std::move(d.reported));
      } catch (const std::exception& e) {
        throw SimulationError(i, t, e.what());
      }
    }
    for (int i = 0; i < n; ++i) {
      try {
        const double expected = env.ExpectedDemand(state, i, prices);
        const double observed = env.ObservedDemand(state, i, expected);
        agents[i]->Observe(posted[i], observed);
        SellerRun& seller = run.sellers[i];
        seller.transcript.Append(reported[i], posted[i], observed);
        if (seller.oracle) {
          seller.oracle->Record(reported[i].probs(), posted[i],
                                env.DemandCurve(state, i, prices));
        }
      } catch (const std::exception& e) {
        throw SimulationError(i, t, e.what());
      }
    }
  }
  run.rounds = t;
  for (int i = 0; i < n; ++i) {
    auto* aug = dynamic_cast<strategies::AugmentedAgent*>(agents[i].get());
    run.sellers[i].inner_calls = aug ? aug->inner_calls() : t;
    if (run.sellers[i].oracle) run.sellers[i].oracle->Flush();
  }
  return run;
}

std::vector<ReplicationRun> Simulate(const Scenario& s) {
  std::vector<std::optional<ReplicationRun>> slots(s.replications);
  std::exception_ptr failure;
  const long long reps = static_cast<long long>(s.replications);
#pragma omp parallel for schedule(dynamic)
  for (long long r = 0; r < reps; ++r) {
    try {
      slots[r] = SimulateReplication(s, static_cast<std::size_t>(r));
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<ReplicationRun> runs;
  runs.reserve(slots.size());
  for (auto& slot : slots) runs.push_back(std::move(*slot));
  return runs;
}

std::uint64_t TranscriptDigest(const transcript::Transcript& tr) {
  DigestBuf buf;
  std::ostream os(&buf);
  transcript::WriteTranscript(tr, os);
  os.flush();
  return buf.digest();
}

std::string DigestHex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(digest));
  return buf;
}

ReplicationSummary SummarizeReplication(const Scenario& s,
                                        const ReplicationRun& run) {
  const SellerRun& seller = run.sellers[s.audited_seller];
  ReplicationSummary out;
  out.replication = run.replication;
  out.seed = run.seed;
  out.seller = s.audited_seller;
  out.rounds = run.rounds;
  out.inner_calls = seller.inner_calls;
  out.verdict = auditor::Audit(seller.transcript, s.audit);
  if (seller.oracle) {
    out.oracle = auditor::ComputeOracleRegrets(
        seller.oracle, seller.cost, out.verdict.cost_lo, out.verdict.cost_hi);
  }
  out.digest = TranscriptDigest(seller.transcript);
  return out;
}

void AggregateReport(RunReport& report) {
  const double n = static_cast<double>(report.replications.size());
  report.passes = 0;
  report.mean_ucb = report.mean_plausible_cost = report.mean_estimator = 0.0;
  report.mean_oracle_plausible = report.mean_oracle_calibrated = 0.0;
  if (n == 0) return;
  for (const auto& r : report.replications) {
    if (r.verdict.pass) ++report.passes;
    report.mean_ucb += r.verdict.ucb / n;
    report.mean_plausible_cost += r.verdict.plausible_cost / n;
    report.mean_estimator += r.verdict.estimator / n;
    if (r.oracle) {
      report.mean_oracle_plausible += r.oracle->plausible / n;
      report.mean_oracle_calibrated += r.oracle->expected_calibrated / n;
    }
  }
  report.pass_rate = static_cast<double>(report.passes) / n;
}

RunReport RunAuditSuite(const Scenario& s,
                        const std::optional<std::string>& transcript_dir) {
  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  report.scenario_id = s.id;
  report.replications.resize(s.replications);
  const bool write = transcript_dir && s.write_transcripts;
  if (write) fs::create_directories(*transcript_dir);
  std::exception_ptr failure;
  const long long reps = static_cast<long long>(s.replications);
#pragma omp parallel for schedule(dynamic)
  for (long long r = 0; r < reps; ++r) {
    try {
      const ReplicationRun run = SimulateReplication(s, static_cast<std::size_t>(r));
      report.replications[r] = SummarizeReplication(s, run);
      if (write) {
        std::ostringstream name;
        name << "rep" << std::setw(4) << std::setfill('0') << r << "_seller"
             << s.audited_seller << ".cpt";
        transcript::WriteTranscriptFile(run.sellers[s.audited_seller].transcript,
                                        (fs::path(*transcript_dir) / name.str()).string());
      }
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  AggregateReport(report);
  report.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start).count();
  return report;
}

namespace {

constexpr const char* kCsvHeader =
    "replication,seed,seller,rounds,inner_calls,estimator,margin,ucb,"
    "threshold,plausible_cost,min_exploration,pass,oracle_expected_calibrated,"
    "oracle_hindsight_calibrated,oracle_hindsight_external,oracle_plausible,"
    "digest";

std::string Num(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace

void WriteRunReport(const RunReport& report, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream csv(fs::path(dir) / "runs.csv");
  if (!csv) throw std::runtime_error("cannot write runs.csv in " + dir);
  csv << "# scenario=" << report.scenario_id << '\n' << kCsvHeader << '\n';
  for (const auto& r : report.replications) {
    const auto& v = r.verdict;
    csv << r.replication << ',' << r.seed << ',' << r.seller << ',' << r.rounds
        << ',' << r.inner_calls << ',' << Num(v.estimator) << ','
        << Num(v.margin) << ',' << Num(v.ucb) << ',' << Num(v.threshold) << ','
        << Num(v.plausible_cost) << ',' << Num(v.min_exploration) << ','
        << (v.pass ? 1 : 0) << ',';
    if (r.oracle) {
      csv << Num(r.oracle->expected_calibrated) << ','
          << Num(r.oracle->hindsight_calibrated) << ','
          << Num(r.oracle->hindsight_external) << ',' << Num(r.oracle->plausible);
    } else {
      csv << ",,,";
    }
    csv << ',' << DigestHex(r.digest) << '\n';
  }
  std::ofstream summary(fs::path(dir) / "summary.txt");
  summary << FormatSummary(report);
}

RunReport ReadRunReport(const std::string& dir) {
  const fs::path path = fs::path(dir) / "runs.csv";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  RunReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find("scenario=");
      if (eq != std::string::npos) report.scenario_id = line.substr(eq + 9);
      continue;
    }
    if (line == kCsvHeader) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.push_back("");
    if (f.size() != 17) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 17 columns");
    }
    ReplicationSummary r;
    try {
      r.replication = std::stoull(f[0]);
      r.seed = std::stoull(f[1]);
      r.seller = std::stoi(f[2]);
      r.rounds = std::stoull(f[3]);
      r.inner_calls = std::stoull(f[4]);
      r.verdict.estimator = std::stod(f[5]);
      r.verdict.margin = std::stod(f[6]);
      r.verdict.ucb = std::stod(f[7]);
      r.verdict.threshold = std::stod(f[8]);
      r.verdict.plausible_cost = std::stod(f[9]);
      r.verdict.min_exploration = std::stod(f[10]);
      r.verdict.pass = f[11] == "1";
      if (!f[12].empty()) {
        auditor::OracleRegrets o;
        o.expected_calibrated = std::stod(f[12]);
        o.hindsight_calibrated = std::stod(f[13]);
        o.hindsight_external = std::stod(f[14]);
        o.plausible = std::stod(f[15]);
        r.oracle = o;
      }
      r.digest = std::stoull(f[16], nullptr, 16);
    } catch (const std::logic_error&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": malformed value");
    }
    report.replications.push_back(std::move(r));
  }
  AggregateReport(report);
  return report;
}

std::string FormatSummary(const RunReport& report) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "scenario: " << report.scenario_id << '\n'
     << "replications: " << report.replications.size() << '\n'
     << "passes: " << report.passes << '\n'
     << "pass rate: " << report.pass_rate << '\n'
     << "mean estimator: " << report.mean_estimator << '\n'
     << "mean UCB: " << report.mean_ucb << '\n'
     << "mean plausible cost: " << report.mean_plausible_cost << '\n'
     << "mean oracle calibrated regret: " << report.mean_oracle_calibrated << '\n'
     << "mean oracle plausible regret: " << report.mean_oracle_plausible << '\n';
  if (report.seconds > 0) os << "seconds: " << report.seconds << '\n';
  return os.str();
}

std::vector<SweepPoint> ConsistencySweep(
    const Scenario& s, const std::vector<std::uint64_t>& horizons) {
  std::vector<SweepPoint> points;
  for (std::uint64_t horizon : horizons) {
    Scenario at = s;
    at.horizon = {Horizon::Kind::kRounds, horizon};
    at.audit.alpha = auditor::ConsistencyAlpha(horizon);
    const RunReport report = RunAuditSuite(at);
    SweepPoint p;
    p.horizon = horizon;
    p.alpha = at.audit.alpha;
    p.mean_ucb = report.mean_ucb;
    p.mean_estimator = report.mean_estimator;
    p.mean_oracle_plausible = report.mean_oracle_plausible;
    for (const auto& r : report.replications) {
      p.mean_margin += r.verdict.margin / static_cast<double>(report.replications.size());
    }
    points.push_back(p);
  }
  return points;
}

}  // namespace colaudit::harness
