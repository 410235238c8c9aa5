#ifndef COLAUDIT_HARNESS_H_
#define COLAUDIT_HARNESS_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "colaudit/auditor.h"
#include "colaudit/market.h"
#include "colaudit/strategies.h"
#include "colaudit/transcript.h"
#include "json.hpp"

namespace colaudit::harness {

inline constexpr const char* kScenarioFormat = "cpt-scenario/1";

struct AgentSpec {
  std::string kind = "fixed";  // fixed | exp3 | calibrated | uniform |
                               // private_signal_colluder
  double cost = 0.0;
  double price = 0.0;
  double p_low = 0.0;
  double p_high = 0.0;
  double low_signal_probability = 0.25;
  strategies::LearningRate rate;
  double gamma = -1.0;  // < 0: the learner's default
  std::optional<double> exploration_floor;
};

struct Horizon {
  // kRounds: exactly `value` rounds. kInnerCalls: run until the audited
  // seller's inner learner has been called `value` times.
  enum class Kind { kRounds, kInnerCalls };
  Kind kind = Kind::kRounds;
  std::uint64_t value = 1000;
};

struct Scenario {
  std::string id = "scenario";
  market::PriceGrid grid = market::PriceGrid({0.0, 1.0}, 0.0, 1.0);
  market::EnvironmentConfig environment;
  std::vector<AgentSpec> agents;
  Horizon horizon;
  auditor::AuditConfig audit;
  int audited_seller = 0;
  std::size_t replications = 1;
  std::uint64_t seed = 0;
  std::string output_dir;
  bool write_transcripts = true;
  bool oracle_all_sellers = false;
  bool keep_curves = false;
};

Scenario ParseScenario(const nlohmann::json& j);
Scenario LoadScenario(const std::string& path);

std::unique_ptr<strategies::SellerAgent> MakeAgent(const AgentSpec& spec,
                                                   const market::PriceGrid& grid,
                                                   std::uint64_t seed);

class SimulationError : public std::runtime_error {
 public:
  SimulationError(int seller, std::uint64_t round, const std::string& what);
  int seller() const { return seller_; }
  std::uint64_t round() const { return round_; }

 private:
  int seller_;
  std::uint64_t round_;
};

struct SellerRun {
  transcript::Transcript transcript;
  std::optional<auditor::OracleLog> oracle;
  std::uint64_t inner_calls = 0;
  double cost = 0.0;
};

struct ReplicationRun {
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  std::uint64_t rounds = 0;
  std::vector<SellerRun> sellers;
};

std::uint64_t ReplicationSeed(const Scenario& s, std::size_t replication);

// One replication of the round protocol: every seller posts, demand is
// evaluated at the joint profile, each seller sees only its own feedback.
ReplicationRun SimulateReplication(const Scenario& s, std::size_t replication);

// All replications, fanned out across threads by seed.
std::vector<ReplicationRun> Simulate(const Scenario& s);

// FNV-1a 64 of the serialized transcript, streamed.
std::uint64_t TranscriptDigest(const transcript::Transcript& tr);
std::string DigestHex(std::uint64_t digest);

struct ReplicationSummary {
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  int seller = 0;
  std::uint64_t rounds = 0;
  std::uint64_t inner_calls = 0;
  auditor::AuditVerdict verdict;
  std::optional<auditor::OracleRegrets> oracle;
  std::uint64_t digest = 0;
};

struct RunReport {
  std::string scenario_id;
  std::vector<ReplicationSummary> replications;
  std::size_t passes = 0;
  double pass_rate = 0.0;
  double mean_ucb = 0.0;
  double mean_plausible_cost = 0.0;
  double mean_estimator = 0.0;
  double mean_oracle_plausible = 0.0;
  double mean_oracle_calibrated = 0.0;
  double seconds = 0.0;
};

ReplicationSummary SummarizeReplication(const Scenario& s,
                                        const ReplicationRun& run);

// Simulates and audits every replication, keeping only summaries. When
// `transcript_dir` is set and the scenario asks for it, the audited seller's
// transcripts are written there.
RunReport RunAuditSuite(const Scenario& s,
                        const std::optional<std::string>& transcript_dir = {});

void AggregateReport(RunReport& report);

void WriteRunReport(const RunReport& report, const std::string& dir);
RunReport ReadRunReport(const std::string& dir);
std::string FormatSummary(const RunReport& report);

struct SweepPoint {
  std::uint64_t horizon = 0;
  double alpha = 0.0;
  double mean_ucb = 0.0;
  double mean_estimator = 0.0;
  double mean_margin = 0.0;
  double mean_oracle_plausible = 0.0;
};

// Audits the scenario at each horizon with alpha^T from ConsistencyAlpha.
std::vector<SweepPoint> ConsistencySweep(
    const Scenario& s, const std::vector<std::uint64_t>& horizons);

}  // namespace colaudit::harness

#endif  // COLAUDIT_HARNESS_H_
