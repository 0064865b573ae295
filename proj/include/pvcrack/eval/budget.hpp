#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pvcrack/eval/metrics.hpp"
#include "pvcrack/format.hpp"

namespace pvcrack::eval {

enum class Environment { A, B, C };

const char* environment_name(Environment e);
Environment parse_environment(const std::string& s);  // "A", "b", ...

struct BudgetProfile {
  Environment environment = Environment::A;
  std::optional<std::size_t> max_blob_bytes;
  std::optional<std::size_t> max_arena_bytes;
  std::optional<format::Scheme> required_scheme;

  // ParamError on a zero limit.
  void validate() const;

  // A: no limits. B: blob <= 8 MB, int8. C: blob <= 100 KB, arena <= 256 KB, int8.
  static BudgetProfile defaults(Environment e);
};

inline constexpr std::size_t kKiB = 1024;
inline constexpr std::size_t kMiB = 1024 * 1024;

struct Latency {
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double mean_ms = 0.0;
};

struct Candidate {
  std::string name;
  format::Scheme scheme = format::Scheme::Int8;
  std::size_t blob_bytes = 0;
  std::optional<std::size_t> arena_bytes;  // known for int8 blobs
  std::optional<double> accuracy;          // mean cross-validation accuracy
  std::optional<MetricsReport> metrics;
  std::optional<Latency> latency;
};

struct RuleOutcome {
  std::string rule;  // "blob_bytes", "arena_bytes", "scheme"
  bool passed = true;
  std::string detail;
};

struct CandidateOutcome {
  Candidate candidate;
  std::vector<RuleOutcome> rules;
  bool passed = true;
  int rank = -1;  // 0 is selected; -1 when rejected
};

struct SelectionReport {
  BudgetProfile profile;
  std::vector<CandidateOutcome> candidates;  // input order
  std::vector<std::size_t> ranking;          // indices of passing candidates, best first

  bool has_selection() const { return !ranking.empty(); }
  std::string status() const { return has_selection() ? "selected" : "no candidate passes"; }
};

// Applies every present limit, then ranks survivors by accuracy (missing
// sorts last), smaller blob, lower p50 latency (missing sorts last), name
// and input position. ParamError when candidates is empty.
SelectionReport budget_gate(const std::vector<Candidate>& candidates, const BudgetProfile& profile);

std::string selection_to_json(const SelectionReport& report);
std::string metrics_to_json(const MetricsReport& report);
std::string render_selection(const SelectionReport& report);

}  // namespace pvcrack::eval
