// colaudit: simulate pricing scenarios, audit CPT/1 transcripts, and size
// audits. Exit codes: 0 success, 2 audit FAIL, 1 error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "colaudit/auditor.h"
#include "colaudit/harness.h"
#include "colaudit/transcript.h"

namespace {

namespace fs = std::filesystem;
using namespace colaudit;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitAuditFail = 2;

int RunSimulate(const std::string& scenario_path,
                const std::optional<std::string>& output_dir) {
  harness::Scenario s = harness::LoadScenario(scenario_path);
  if (output_dir) s.output_dir = *output_dir;
  if (s.output_dir.empty()) s.output_dir = "runs/" + s.id;
  const std::string transcripts = (fs::path(s.output_dir) / "transcripts").string();
  const harness::RunReport report = harness::RunAuditSuite(s, transcripts);
  harness::WriteRunReport(report, s.output_dir);
  for (const auto& r : report.replications) {
    std::cout << "replication=" << r.replication << " seed=" << r.seed
              << " verdict=" << (r.verdict.pass ? "PASS" : "FAIL")
              << " digest=" << harness::DigestHex(r.digest) << '\n';
  }
  std::cout << harness::FormatSummary(report);
  std::cout << "output_dir=" << s.output_dir << '\n';
  return kExitOk;
}

int RunAudit(const std::string& path, const auditor::AuditConfig& cfg,
             bool json) {
  const transcript::Transcript tr = transcript::ReadTranscriptFile(path);
  cfg.Validate(tr.k());
  const auditor::AuditVerdict v = auditor::Audit(tr, cfg);
  if (json) {
    std::cout << auditor::VerdictToJsonLine(v) << '\n';
  } else {
    std::cout << auditor::VerdictToKeyValue(v);
  }
  return v.pass ? kExitOk : kExitAuditFail;
}

int RunComplexity(std::size_t k, double pmax, double alpha, double target,
                  double floor) {
  const std::uint64_t rounds =
      auditor::SampleComplexity(k, pmax, alpha, target, floor);
  std::cout << "rounds=" << rounds << '\n';
  return kExitOk;
}

int RunReport(const std::string& dir) {
  std::cout << harness::FormatSummary(harness::ReadRunReport(dir));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibrated-regret audits for algorithmic pricing"};
  app.require_subcommand(1);

  auto* simulate = app.add_subcommand("simulate", "Run a scenario file");
  std::string scenario_path;
  std::optional<std::string> output_dir;
  simulate->add_option("scenario", scenario_path, "Scenario JSON")
      ->required()
      ->check(CLI::ExistingFile);
  simulate->add_option("--output-dir", output_dir,
                       "Override the scenario's output directory");

  auto* audit = app.add_subcommand("audit", "Audit a CPT/1 transcript");
  std::string transcript_path;
  auditor::AuditConfig cfg;
  std::optional<double> cost_lo, cost_hi;
  bool json = false;
  audit->add_option("transcript", transcript_path, "Transcript file")
      ->required()
      ->check(CLI::ExistingFile);
  audit->add_option("--alpha", cfg.alpha, "Confidence level")
      ->capture_default_str();
  audit->add_option("--target-regret", cfg.target_regret, "Target regret")
      ->capture_default_str();
  audit->add_option("--cost-lo", cost_lo, "Lower cost bound");
  audit->add_option("--cost-hi", cost_hi, "Upper cost bound");
  audit->add_option("--floor", cfg.exploration_requirement,
                    "Required minimum exploration probability");
  audit->add_flag("--json", json, "Print one JSON line");

  auto* complexity =
      app.add_subcommand("complexity", "Rounds needed for a sound audit");
  std::size_t k = 0;
  double pmax = 1.0, alpha = 0.05, target = 0.1, floor = 0.01;
  complexity->add_option("--k", k, "Number of price levels")->required();
  complexity->add_option("--pmax", pmax, "Maximum price")->required();
  complexity->add_option("--alpha", alpha, "Confidence level")->required();
  complexity->add_option("--target-regret", target, "Target regret")->required();
  complexity->add_option("--floor", floor, "Exploration floor")->required();

  auto* report = app.add_subcommand("report", "Summarize a run directory");
  std::string run_dir;
  report->add_option("run-dir", run_dir, "Directory holding runs.csv")
      ->required()
      ->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*simulate) return RunSimulate(scenario_path, output_dir);
    if (*audit) {
      cfg.cost_lo = cost_lo;
      cfg.cost_hi = cost_hi;
      return RunAudit(transcript_path, cfg, json);
    }
    if (*complexity) return RunComplexity(k, pmax, alpha, target, floor);
    if (*report) return RunReport(run_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
