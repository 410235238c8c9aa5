#include "colaudit/transcript.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace colaudit::transcript {
namespace {

constexpr double kSimplexTolerance = 1e-9;

std::string FormatDouble(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x,
                           std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::vector<std::string> Split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <typename T>
bool ParseNumber(const std::string& s, T& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool ValidMetadataToken(const std::string& s) {
  if (s.empty()) return false;
  return std::none_of(s.begin(), s.end(), [](char c) {
    return c == '\t' || c == '\n' || c == '\r' || c == ' ';
  });
}

// Shared validation for Append and the parser. Returns an error message or
// an empty string.
std::string CheckRound(std::span<const double> pi, std::size_t k,
                       std::size_t price_index, double demand) {
  if (pi.size() != k) return "expected " + std::to_string(k) + " probabilities";
  double total = 0.0;
  for (double p : pi) {
    if (!std::isfinite(p) || p < 0.0) return "negative or non-finite probability";
    total += p;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    return "probabilities sum to " + FormatDouble(total) + ", not 1";
  }
  if (price_index >= k) return "price index out of range";
  if (!(pi[price_index] > 0.0)) {
    return "posted price has zero reported probability";
  }
  if (!(demand >= 0.0 && demand <= 1.0)) {
    return "observed demand outside [0, 1]";
  }
  return {};
}

}  // namespace

Transcript::Transcript(market::PriceGrid grid, TranscriptMetadata metadata)
    : grid_(std::move(grid)), metadata_(std::move(metadata)) {
  if (!ValidMetadataToken(metadata_.scenario)) {
    throw std::invalid_argument("scenario id must be a nonempty token");
  }
}

void Transcript::Append(std::span<const double> pi, std::size_t price_index,
                        double observed_demand) {
  const std::string err = CheckRound(pi, k(), price_index, observed_demand);
  if (!err.empty()) {
    throw std::invalid_argument("round " + std::to_string(size() + 1) + ": " +
                                err);
  }
  probs_.insert(probs_.end(), pi.begin(), pi.end());
  posted_.push_back(price_index);
  demands_.push_back(observed_demand);
}

TranscriptRound Transcript::round(std::size_t i) const {
  return {i + 1, std::span<const double>(probs_).subspan(i * k(), k()),
          posted_[i], demands_[i]};
}

double MinExplorationProbability(const Transcript& tr) {
  if (tr.empty()) {
    throw std::invalid_argument("minimum exploration of an empty transcript");
  }
  const auto probs = tr.probabilities();
  return *std::min_element(probs.begin(), probs.end());
}

ParseError::ParseError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message),
      line_(line) {}

void WriteTranscript(const Transcript& tr, std::ostream& out) {
  const auto& grid = tr.grid();
  const auto& meta = tr.metadata();
  out << kFormatVersion << "\tk=" << grid.size()
      << "\tpmax=" << FormatDouble(grid.max_price()) << "\tlevels=";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i) out << ',';
    out << FormatDouble(grid.level(i));
  }
  out << "\tcost_lo=" << FormatDouble(grid.cost_lo())
      << "\tcost_hi=" << FormatDouble(grid.cost_hi()) << "\tseed=" << meta.seed
      << "\tscenario=" << meta.scenario << "\treported_cost="
      << (meta.reported_cost ? FormatDouble(*meta.reported_cost) : "-") << '\n';
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const TranscriptRound r = tr.round(i);
    out << r.t;
    for (double p : r.pi) out << '\t' << FormatDouble(p);
    out << '\t' << r.price_index << '\t' << FormatDouble(r.observed_demand)
        << '\n';
  }
}

Transcript ReadTranscript(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto fields = Split(line, '\t');
  if (fields[0] != kFormatVersion) {
    throw ParseError(1, "unsupported format version '" + fields[0] +
                            "', expected " + kFormatVersion);
  }
  std::map<std::string, std::string> header;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto eq = fields[i].find('=');
    if (eq == std::string::npos) {
      throw ParseError(1, "malformed header field '" + fields[i] + "'");
    }
    header[fields[i].substr(0, eq)] = fields[i].substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = header.find(key);
    if (it == header.end()) throw ParseError(1, "header lacks '" + key + "'");
    return it->second;
  };
  std::size_t k = 0;
  double pmax = 0.0, cost_lo = 0.0, cost_hi = 0.0;
  if (!ParseNumber(need("k"), k) || k == 0) throw ParseError(1, "bad k");
  if (!ParseNumber(need("pmax"), pmax)) throw ParseError(1, "bad pmax");
  if (!ParseNumber(need("cost_lo"), cost_lo)) throw ParseError(1, "bad cost_lo");
  if (!ParseNumber(need("cost_hi"), cost_hi)) throw ParseError(1, "bad cost_hi");
  std::vector<double> levels;
  for (const auto& s : Split(need("levels"), ',')) {
    double v;
    if (!ParseNumber(s, v)) throw ParseError(1, "bad price level '" + s + "'");
    levels.push_back(v);
  }
  if (levels.size() != k) throw ParseError(1, "levels do not match k");
  if (pmax != levels.back()) throw ParseError(1, "pmax is not the top level");

  TranscriptMetadata meta;
  if (header.count("seed") && !ParseNumber(header["seed"], meta.seed)) {
    throw ParseError(1, "bad seed");
  }
  if (header.count("scenario")) meta.scenario = header["scenario"];
  if (header.count("reported_cost") && header["reported_cost"] != "-") {
    double c;
    if (!ParseNumber(header["reported_cost"], c)) {
      throw ParseError(1, "bad reported_cost");
    }
    meta.reported_cost = c;
  }

  std::optional<Transcript> tr;
  try {
    tr.emplace(market::PriceGrid(std::move(levels), cost_lo, cost_hi),
               std::move(meta));
  } catch (const std::invalid_argument& e) {
    throw ParseError(1, e.what());
  }

  std::vector<double> pi(k);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw ParseError(line_no, "empty row");
    }
    const std::uint64_t expected_t = tr->size() + 1;
    const std::string row_name = "row " + std::to_string(expected_t);
    fields = Split(line, '\t');
    if (fields.size() != k + 3) {
      throw ParseError(line_no, row_name + ": expected " +
                                    std::to_string(k + 3) + " fields");
    }
    std::uint64_t t;
    if (!ParseNumber(fields[0], t)) {
      throw ParseError(line_no, row_name + ": bad round index");
    }
    if (t != expected_t) {
      throw ParseError(line_no, row_name + ": round index " + fields[0] +
                                    " is not contiguous");
    }
    for (std::size_t i = 0; i < k; ++i) {
      if (!ParseNumber(fields[1 + i], pi[i])) {
        throw ParseError(line_no, row_name + ": bad probability '" +
                                      fields[1 + i] + "'");
      }
    }
    std::size_t index;
    double demand;
    if (!ParseNumber(fields[k + 1], index)) {
      throw ParseError(line_no, row_name + ": bad price index");
    }
    if (!ParseNumber(fields[k + 2], demand)) {
      throw ParseError(line_no, row_name + ": bad observed demand");
    }
    const std::string err = CheckRound(pi, k, index, demand);
    if (!err.empty()) throw ParseError(line_no, row_name + ": " + err);
    tr->Append(pi, index, demand);
  }
  return std::move(*tr);
}

std::string TranscriptToString(const Transcript& tr) {
  std::ostringstream os;
  WriteTranscript(tr, os);
  return os.str();
}

Transcript TranscriptFromString(const std::string& text) {
  std::istringstream is(text);
  return ReadTranscript(is);
}

void WriteTranscriptFile(const Transcript& tr, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write transcript: " + path);
  WriteTranscript(tr, out);
}

Transcript ReadTranscriptFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open transcript: " + path);
  return ReadTranscript(in);
}

}  // namespace colaudit::transcript
