#ifndef COLAUDIT_TRANSCRIPT_H_
#define COLAUDIT_TRANSCRIPT_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "colaudit/market.h"
#include "colaudit/strategies.h"

namespace colaudit::transcript {

inline constexpr const char* kFormatVersion = "CPT/1";

// One logged round: reported pi^t, posted price index, observed x^t(p^t).
struct TranscriptRound {
  std::uint64_t t;
  std::span<const double> pi;
  std::size_t price_index;
  double observed_demand;
};

struct TranscriptMetadata {
  std::uint64_t seed = 0;
  std::string scenario = "-";
  // Reserved; no audit path reads it.
  std::optional<double> reported_cost;

  bool operator==(const TranscriptMetadata&) const = default;
};

// Propensity-score transcript of a single seller. Rounds are stored flat so
// the audit kernels can stream over them.
class Transcript {
 public:
  Transcript(market::PriceGrid grid, TranscriptMetadata metadata = {});

  // Validates and appends round size()+1.
  void Append(std::span<const double> pi, std::size_t price_index,
              double observed_demand);
  void Append(const strategies::PriceDistribution& pi, std::size_t price_index,
              double observed_demand) {
    Append(pi.probs(), price_index, observed_demand);
  }

  const market::PriceGrid& grid() const { return grid_; }
  const TranscriptMetadata& metadata() const { return metadata_; }
  TranscriptMetadata& metadata() { return metadata_; }
  std::size_t k() const { return grid_.size(); }
  std::size_t size() const { return posted_.size(); }
  bool empty() const { return posted_.empty(); }

  TranscriptRound round(std::size_t i) const;  // 0-based position
  std::span<const double> probabilities() const { return probs_; }
  std::span<const std::size_t> posted() const { return posted_; }
  std::span<const double> demands() const { return demands_; }

  bool operator==(const Transcript&) const = default;

 private:
  market::PriceGrid grid_;
  TranscriptMetadata metadata_;
  std::vector<double> probs_;
  std::vector<std::size_t> posted_;
  std::vector<double> demands_;
};

// Smallest reported probability over all rounds and levels.
// Throws std::invalid_argument on an empty transcript.
double MinExplorationProbability(const Transcript& tr);

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

void WriteTranscript(const Transcript& tr, std::ostream& out);
Transcript ReadTranscript(std::istream& in);

std::string TranscriptToString(const Transcript& tr);
Transcript TranscriptFromString(const std::string& text);

void WriteTranscriptFile(const Transcript& tr, const std::string& path);
Transcript ReadTranscriptFile(const std::string& path);

}  // namespace colaudit::transcript

#endif  // COLAUDIT_TRANSCRIPT_H_
