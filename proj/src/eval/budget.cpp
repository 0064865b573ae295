#include "pvcrack/eval/budget.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "pvcrack/common.hpp"

namespace pvcrack::eval {

const char* environment_name(Environment e) {
  switch (e) {
    case Environment::A: return "A";
    case Environment::B: return "B";
    case Environment::C: return "C";
  }
  return "?";
}

Environment parse_environment(const std::string& s) {
  if (s == "A" || s == "a") return Environment::A;
  if (s == "B" || s == "b") return Environment::B;
  if (s == "C" || s == "c") return Environment::C;
  throw UsageError("unknown budget profile '" + s + "' (expected A, B or C)");
}

void BudgetProfile::validate() const {
  if (max_blob_bytes && *max_blob_bytes == 0) throw ParamError("profile: max_blob_bytes must be > 0");
  if (max_arena_bytes && *max_arena_bytes == 0)
    throw ParamError("profile: max_arena_bytes must be > 0");
}

BudgetProfile BudgetProfile::defaults(Environment e) {
  BudgetProfile p;
  p.environment = e;
  if (e == Environment::B) {
    p.max_blob_bytes = 8 * kMiB;
    p.required_scheme = format::Scheme::Int8;
  } else if (e == Environment::C) {
    p.max_blob_bytes = 100 * kKiB;
    p.max_arena_bytes = 256 * kKiB;
    p.required_scheme = format::Scheme::Int8;
  }
  return p;
}

SelectionReport budget_gate(const std::vector<Candidate>& candidates, const BudgetProfile& profile) {
  if (candidates.empty()) throw ParamError("budget_gate: no candidates");
  profile.validate();
  SelectionReport rep;
  rep.profile = profile;
  for (const auto& c : candidates) {
    CandidateOutcome o;
    o.candidate = c;
    if (profile.max_blob_bytes) {
      const bool ok = c.blob_bytes <= *profile.max_blob_bytes;
      o.rules.push_back({"blob_bytes", ok,
                         std::to_string(c.blob_bytes) + (ok ? " <= " : " > ") +
                             std::to_string(*profile.max_blob_bytes)});
    }
    if (profile.max_arena_bytes) {
      if (!c.arena_bytes) {
        o.rules.push_back({"arena_bytes", false, "unknown"});
      } else {
        const bool ok = *c.arena_bytes <= *profile.max_arena_bytes;
        o.rules.push_back({"arena_bytes", ok,
                           std::to_string(*c.arena_bytes) + (ok ? " <= " : " > ") +
                               std::to_string(*profile.max_arena_bytes)});
      }
    }
    if (profile.required_scheme) {
      const bool ok = c.scheme == *profile.required_scheme;
      o.rules.push_back({"scheme", ok,
                         std::string(format::scheme_name(c.scheme)) + (ok ? " == " : " != ") +
                             format::scheme_name(*profile.required_scheme)});
    }
    o.passed = std::all_of(o.rules.begin(), o.rules.end(), [](const RuleOutcome& r) { return r.passed; });
    rep.candidates.push_back(std::move(o));
  }
  for (std::size_t i = 0; i < rep.candidates.size(); ++i)
    if (rep.candidates[i].passed) rep.ranking.push_back(i);

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::sort(rep.ranking.begin(), rep.ranking.end(), [&](std::size_t ia, std::size_t ib) {
    const Candidate& a = rep.candidates[ia].candidate;
    const Candidate& b = rep.candidates[ib].candidate;
    const double acc_a = a.accuracy.value_or(-inf), acc_b = b.accuracy.value_or(-inf);
    if (acc_a != acc_b) return acc_a > acc_b;
    if (a.blob_bytes != b.blob_bytes) return a.blob_bytes < b.blob_bytes;
    const double lat_a = a.latency ? a.latency->p50_ms : inf;
    const double lat_b = b.latency ? b.latency->p50_ms : inf;
    if (lat_a != lat_b) return lat_a < lat_b;
    if (a.name != b.name) return a.name < b.name;
    return ia < ib;
  });
  for (std::size_t r = 0; r < rep.ranking.size(); ++r)
    rep.candidates[rep.ranking[r]].rank = static_cast<int>(r);
  return rep;
}

namespace {

using nlohmann::ordered_json;

ordered_json metrics_json(const MetricsReport& r) {
  ordered_json j;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  j["sample_count"] = r.sample_count;
  j["confusion"] = r.confusion.counts;
  return j;
}

template <typename T>
ordered_json opt(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

}  // namespace

std::string metrics_to_json(const MetricsReport& report) { return metrics_json(report).dump(2) + "\n"; }

std::string selection_to_json(const SelectionReport& report) {
  ordered_json j;
  const auto& p = report.profile;
  j["profile"] = {{"environment", environment_name(p.environment)},
                  {"max_blob_bytes", opt(p.max_blob_bytes)},
                  {"max_arena_bytes", opt(p.max_arena_bytes)},
                  {"required_scheme", p.required_scheme ? ordered_json(format::scheme_name(*p.required_scheme))
                                                        : ordered_json(nullptr)}};
  j["status"] = report.status();
  ordered_json list = ordered_json::array();
  for (const auto& o : report.candidates) {
    const Candidate& c = o.candidate;
    ordered_json e;
    e["name"] = c.name;
    e["scheme"] = format::scheme_name(c.scheme);
    e["blob_bytes"] = c.blob_bytes;
    e["arena_bytes"] = opt(c.arena_bytes);
    e["accuracy"] = opt(c.accuracy);
    e["metrics"] = c.metrics ? metrics_json(*c.metrics) : ordered_json(nullptr);
    e["latency"] = c.latency ? ordered_json{{"p50_ms", c.latency->p50_ms},
                                            {"p95_ms", c.latency->p95_ms},
                                            {"mean_ms", c.latency->mean_ms}}
                             : ordered_json(nullptr);
    ordered_json rules = ordered_json::array();
    for (const auto& r : o.rules) rules.push_back({{"rule", r.rule}, {"passed", r.passed}, {"detail", r.detail}});
    e["rules"] = rules;
    e["passed"] = o.passed;
    e["rank"] = o.rank >= 0 ? ordered_json(o.rank) : ordered_json(nullptr);
    list.push_back(e);
  }
  j["candidates"] = list;
  ordered_json ranking = ordered_json::array();
  for (std::size_t i : report.ranking) ranking.push_back(report.candidates[i].candidate.name);
  j["ranking"] = ranking;
  return j.dump(2) + "\n";
}

std::string render_selection(const SelectionReport& report) {
  std::ostringstream os;
  os << "profile " << environment_name(report.profile.environment) << ": " << report.status() << "\n";
  os << std::left << std::setw(28) << "candidate" << std::setw(7) << "scheme" << std::right
     << std::setw(12) << "blob" << std::setw(12) << "arena" << std::setw(10) << "accuracy"
     << std::setw(10) << "p50 ms" << std::setw(8) << "rank" << "  result\n";
  for (const auto& o : report.candidates) {
    const Candidate& c = o.candidate;
    os << std::left << std::setw(28) << c.name << std::setw(7) << format::scheme_name(c.scheme)
       << std::right << std::setw(12) << c.blob_bytes << std::setw(12)
       << (c.arena_bytes ? std::to_string(*c.arena_bytes) : "-") << std::setw(10);
    if (c.accuracy) {
      os << std::fixed << std::setprecision(4) << *c.accuracy;
    } else {
      os << "-";
    }
    os << std::setw(10);
    if (c.latency) {
      os << std::fixed << std::setprecision(3) << c.latency->p50_ms;
    } else {
      os << "-";
    }
    os << std::setw(8) << (o.rank >= 0 ? std::to_string(o.rank) : "-") << "  "
       << (o.passed ? "pass" : "fail");
    for (const auto& r : o.rules)
      if (!r.passed) os << " [" << r.rule << ": " << r.detail << "]";
    os << "\n";
  }
  return os.str();
}

}  // namespace pvcrack::eval
