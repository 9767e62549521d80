// Copyright (C) 2026 The sebox Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Per-snapshot counts and histograms, cross-commit deltas, type ages,
// piecewise exponential fits and keyword filters.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sebox/box_engine.hpp"
#include "sebox/error.hpp"
#include "sebox/policy_model.hpp"
#include "sebox/policy_parser.hpp"

namespace sebox {

// Boxes-per-rule bins: 0, 1, 2-9, 10-99, 100-999, 1000-9999, 10000-99999,
// >= 100000. The leading zero bin keeps rules that resolve to no boxes
// (e.g. an empty attribute) so the bins always sum to the rule count.
inline constexpr std::size_t kBprBins = 8;
using BprHistogram = std::array<std::uint64_t, kBprBins>;
using RpbHistogram = std::map<std::uint64_t, std::uint64_t>;

inline std::size_t bpr_bin(std::uint64_t boxes) {
  if (boxes == 0) return 0;
  if (boxes == 1) return 1;
  std::size_t bin = 2;
  for (std::uint64_t upper = 10; boxes >= upper && bin < kBprBins - 1;
       upper *= 10)
    ++bin;
  return bin;
}

inline const std::array<const char*, kBprBins>& bpr_bin_labels() {
  static const std::array<const char*, kBprBins> labels = {
      "bpr_0",      "bpr_1",         "bpr_2_9",
      "bpr_10_99",  "bpr_100_999",   "bpr_1000_9999",
      "bpr_10000_99999", "bpr_100000_plus"};
  return labels;
}

struct MetricsRow {
  std::string commit;
  std::int64_t commit_index = -1;
  std::int64_t author_timestamp = 0;
  bool failed = false;

  std::uint64_t num_allow_rules = 0;
  std::uint64_t num_neverallow_rules = 0;
  std::uint64_t num_boxes = 0;  // |final_allow|
  std::uint64_t num_neverallow_boxes = 0;
  std::uint64_t num_assertion_violations = 0;
  std::uint64_t num_types = 0;  // concrete types
  std::uint64_t num_attributes = 0;
  std::uint64_t num_classes = 0;
  std::uint64_t num_permissions = 0;  // sum over classes

  std::uint64_t allow_rule_boxes = 0;  // sum of |boxes(r)| over allow rules
  std::uint64_t covered_boxes = 0;     // |allow u neverallow|
  std::uint64_t universe_boxes = 0;    // num_types^2 * num_permissions

  BprHistogram bpr_histogram{};
  RpbHistogram rpb_histogram;

  bool avg_defined() const { return num_allow_rules != 0; }
  // 0 when there are no allow rules; see avg_defined().
  double avg_boxes_per_rule() const {
    return avg_defined() ? static_cast<double>(allow_rule_boxes) /
                               static_cast<double>(num_allow_rules)
                         : 0.0;
  }
  double coverage_ratio() const {
    return universe_boxes ? static_cast<double>(covered_boxes) /
                                static_cast<double>(universe_boxes)
                          : 0.0;
  }
  // Rule count used for deltas; optionally counts neverallow rules too.
  std::uint64_t rule_count(bool include_neverallow) const {
    return num_allow_rules + (include_neverallow ? num_neverallow_rules : 0);
  }

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline BprHistogram boxes_per_rule_histogram(const DecompositionResult& d) {
  BprHistogram h{};
  for (std::size_t id = 0; id < d.rule_kinds.size(); ++id)
    if (d.rule_kinds[id] == RuleKind::Allow) ++h[bpr_bin(d.rule_box_counts[id])];
  return h;
}

// Multiplicity (>= 2) -> number of final boxes produced by that many rules.
inline RpbHistogram rules_per_box_histogram(const DecompositionResult& d) {
  RpbHistogram h;
  for (std::size_t i = 0; i < d.final_allow.size(); ++i) {
    auto n = d.final_allow.origin_at(i).size();
    if (n >= 2) ++h[n];
  }
  return h;
}

inline MetricsRow snapshot_metrics(const PolicySnapshot& snap,
                                   const DecompositionResult& d) {
  MetricsRow row;
  for (std::size_t id = 0; id < d.rule_kinds.size(); ++id) {
    if (d.rule_kinds[id] == RuleKind::Allow) {
      ++row.num_allow_rules;
      row.allow_rule_boxes += d.rule_box_counts[id];
    } else {
      ++row.num_neverallow_rules;
    }
  }
  row.num_boxes = d.final_allow.size();
  row.num_neverallow_boxes = d.neverallow.size();
  row.num_assertion_violations = d.assertion_violations.size();
  for (const auto& [_, sym] : snap.symbols.types) {
    if (sym.kind == SymbolKind::ConcreteType) ++row.num_types;
    else ++row.num_attributes;
  }
  row.num_classes = snap.catalog.classes.size();
  row.num_permissions = snap.catalog.permission_count();
  row.covered_boxes = BoxSet::union_size(d.allow, d.neverallow);
  row.universe_boxes = row.num_types * row.num_types * row.num_permissions;
  row.bpr_histogram = boxes_per_rule_histogram(d);
  row.rpb_histogram = rules_per_box_histogram(d);
  return row;
}

struct DeltaRow {
  std::string commit;
  std::int64_t commit_index = 0;
  std::int64_t delta_rules = 0;
  std::int64_t delta_boxes = 0;
  std::optional<double> ratio;  // empty when delta_rules == 0

  friend bool operator==(const DeltaRow&, const DeltaRow&) = default;
};

struct DeltaSeries {
  std::vector<DeltaRow> rows;
  std::optional<double> mean_ratio;  // over defined ratios only
};

// Consecutive differences of rule and box counts.
inline DeltaSeries delta_series(std::span<const MetricsRow> rows,
                                bool include_neverallow = false) {
  if (rows.size() < 2)
    throw Error(ErrorCode::FewerThanTwoRows,
                "need at least two rows, got " + std::to_string(rows.size()));
  DeltaSeries out;
  double sum = 0;
  std::size_t defined = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    DeltaRow d;
    d.commit = rows[i].commit;
    d.commit_index = rows[i].commit_index;
    d.delta_rules = static_cast<std::int64_t>(rows[i].rule_count(include_neverallow)) -
                    static_cast<std::int64_t>(rows[i - 1].rule_count(include_neverallow));
    d.delta_boxes = static_cast<std::int64_t>(rows[i].num_boxes) -
                    static_cast<std::int64_t>(rows[i - 1].num_boxes);
    if (d.delta_rules != 0) {
      d.ratio = static_cast<double>(d.delta_boxes) /
                static_cast<double>(d.delta_rules);
      sum += *d.ratio;
      ++defined;
    }
    out.rows.push_back(std::move(d));
  }
  if (defined) out.mean_ratio = sum / static_cast<double>(defined);
  return out;
}

// Type tokens referenced by one commit's added or removed policy lines.
struct CommitTokens {
  std::int64_t commit_index = 0;
  std::set<std::string> subjects;
  std::set<std::string> objects;

  friend bool operator==(const CommitTokens&, const CommitTokens&) = default;
};

struct AgeRecord {
  std::string type_name;
  Position position = Position::Subject;
  std::int64_t last_changed_index = 0;
  std::int64_t age = 0;

  friend bool operator==(const AgeRecord&, const AgeRecord&) = default;
};

struct CdfPoint {
  std::int64_t age = 0;
  double fraction = 0;
};

struct AgeReport {
  std::vector<AgeRecord> records;  // ascending by age, then name
  std::vector<CdfPoint> cdf;       // one point per distinct age
};

// Age of each type alive at head: head_index minus the index of the last
// commit whose diff referenced it in `position`. A type no diff references is
// treated as unchanged since the first commit.
inline AgeReport type_age_cdf(std::span<const CommitTokens> history,
                              std::int64_t head_index, Position position,
                              const std::set<std::string>& alive) {
  std::map<std::string, std::int64_t> last;
  for (const auto& c : history) {
    if (c.commit_index > head_index) continue;
    const auto& tokens = position == Position::Subject ? c.subjects : c.objects;
    for (const auto& t : tokens) {
      if (!alive.count(t)) continue;
      auto& v = last.try_emplace(t, c.commit_index).first->second;
      v = std::max(v, c.commit_index);
    }
  }
  AgeReport out;
  for (const auto& t : alive) {
    auto it = last.find(t);
    std::int64_t changed = it == last.end() ? 0 : it->second;
    out.records.push_back({t, position, changed, head_index - changed});
  }
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const AgeRecord& a, const AgeRecord& b) {
                     return a.age < b.age;
                   });
  const double n = static_cast<double>(out.records.size());
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    bool last_of_age = i + 1 == out.records.size() ||
                       out.records[i + 1].age != out.records[i].age;
    if (last_of_age)
      out.cdf.push_back({out.records[i].age, static_cast<double>(i + 1) / n});
  }
  return out;
}

struct SeriesPoint {
  double index = 0;
  double value = 0;
};

struct FitSegment {
  double start_index = 0;
  double end_index = 0;
  std::size_t points = 0;
  double ln_a = 0;
  double b = 0;  // growth exponent per index step
  double rms_residual = 0;  // in log space
};

// Least-squares fit of ln(value) = ln_a + b * index on each segment. Points
// with index < breakpoints[k] belong to segment k; the rest go right.
inline std::vector<FitSegment> fit_exponential(std::span<const SeriesPoint> series,
                                               std::span<const double> breakpoints) {
  std::vector<SeriesPoint> pts(series.begin(), series.end());
  for (const auto& p : pts)
    if (!(p.value > 0))
      throw Error(ErrorCode::NonPositiveValue,
                  "value " + std::to_string(p.value) + " at index " +
                      std::to_string(p.index));
  std::stable_sort(pts.begin(), pts.end(),
                   [](const SeriesPoint& a, const SeriesPoint& b) {
                     return a.index < b.index;
                   });
  if (pts.size() < 3)
    throw Error(ErrorCode::SegmentTooSmall, "fewer than 3 points");
  for (std::size_t k = 0; k < breakpoints.size(); ++k) {
    bool interior = breakpoints[k] > pts.front().index &&
                    breakpoints[k] < pts.back().index;
    bool increasing = k == 0 || breakpoints[k] > breakpoints[k - 1];
    if (!interior || !increasing)
      throw Error(ErrorCode::InvalidBreakpoints,
                  "breakpoints must be strictly increasing and interior");
  }
  std::vector<FitSegment> out;
  std::size_t begin = 0;
  for (std::size_t k = 0; k <= breakpoints.size(); ++k) {
    std::size_t end = begin;
    while (end < pts.size() &&
           (k == breakpoints.size() || pts[end].index < breakpoints[k]))
      ++end;
    std::size_t n = end - begin;
    if (n < 3)
      throw Error(ErrorCode::SegmentTooSmall,
                  "segment " + std::to_string(k) + " has " + std::to_string(n) +
                      " points");
    double mx = 0, my = 0;
    for (std::size_t i = begin; i < end; ++i) {
      mx += pts[i].index;
      my += std::log(pts[i].value);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, sxy = 0;
    for (std::size_t i = begin; i < end; ++i) {
      double dx = pts[i].index - mx;
      sxx += dx * dx;
      sxy += dx * (std::log(pts[i].value) - my);
    }
    if (sxx == 0)
      throw Error(ErrorCode::SegmentTooSmall, "segment has a single index");
    FitSegment seg;
    seg.start_index = pts[begin].index;
    seg.end_index = pts[end - 1].index;
    seg.points = n;
    seg.b = sxy / sxx;
    seg.ln_a = my - seg.b * mx;
    double ss = 0;
    for (std::size_t i = begin; i < end; ++i) {
      double r = std::log(pts[i].value) - (seg.ln_a + seg.b * pts[i].index);
      ss += r * r;
    }
    seg.rms_residual = std::sqrt(ss / static_cast<double>(n));
    out.push_back(seg);
    begin = end;
  }
  return out;
}

struct KeywordCounts {
  std::uint64_t boxes = 0;
  std::uint64_t rules = 0;

  friend bool operator==(const KeywordCounts&, const KeywordCounts&) = default;
};

// Final boxes whose subject or object name contains any keyword, and the
// number of distinct rules originating at least one of them.
inline KeywordCounts keyword_filter_metrics(const DecompositionResult& d,
                                            std::span<const std::string> keywords) {
  if (keywords.empty())
    throw Error(ErrorCode::InvalidArgument, "keyword list is empty");
  for (const auto& k : keywords)
    if (k.empty()) throw Error(ErrorCode::InvalidArgument, "empty keyword");
  const auto& types = d.codec.types();
  std::vector<char> matches(types.size(), 0);
  for (std::size_t t = 0; t < types.size(); ++t)
    for (const auto& k : keywords)
      if (types[t].find(k) != std::string::npos) matches[t] = 1;
  KeywordCounts out;
  std::set<RuleId> rules;
  for (std::size_t i = 0; i < d.final_allow.size(); ++i) {
    auto parts = BoxCodec::unpack(d.final_allow.keys()[i]);
    if (!matches[parts.subject] && !matches[parts.object]) continue;
    ++out.boxes;
    for (auto r : d.final_allow.origin_at(i)) rules.insert(r);
  }
  out.rules = rules.size();
  return out;
}

}  // namespace sebox
