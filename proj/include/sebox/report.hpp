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

// CSV and JSON serialization of metrics, deltas, ages and fits.

#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sebox/error.hpp"
#include "sebox/metrics_engine.hpp"
#include "sebox/repo_miner.hpp"

namespace sebox {

inline constexpr int kMetricsSchemaVersion = 1;

// Fixed notation with 6 significant digits, so output never depends on the
// stream's locale or precision state.
inline std::string format_decimal(double v) {
  if (!std::isfinite(v)) return v != v ? "nan" : (v > 0 ? "inf" : "-inf");
  if (v == 0) return "0";
  int exponent = static_cast<int>(std::floor(std::log10(std::fabs(v))));
  int decimals = std::max(0, 5 - exponent);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

inline std::string format_rpb(const RpbHistogram& h) {
  std::string out;
  for (const auto& [k, v] : h) {
    if (!out.empty()) out += ';';
    out += std::to_string(k) + ':' + std::to_string(v);
  }
  return out;
}

inline std::string metrics_csv_header() {
  std::string h =
      "commit_index,commit,author_timestamp,status,num_allow_rules,"
      "num_neverallow_rules,num_rules_total,num_boxes,num_neverallow_boxes,"
      "num_assertion_violations,num_types,num_attributes,num_classes,"
      "num_permissions,avg_boxes_per_rule,coverage_ratio";
  for (const char* label : bpr_bin_labels()) h += std::string(",") + label;
  return h + ",rpb";
}

inline void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows) {
  os << "# sebox metrics schema " << kMetricsSchemaVersion << "\n"
     << metrics_csv_header() << "\n";
  for (const auto& r : rows) {
    os << r.commit_index << ',' << r.commit << ',' << r.author_timestamp << ','
       << (r.failed ? "failed" : "ok") << ',' << r.num_allow_rules << ','
       << r.num_neverallow_rules << ','
       << r.num_allow_rules + r.num_neverallow_rules << ',' << r.num_boxes << ','
       << r.num_neverallow_boxes << ',' << r.num_assertion_violations << ','
       << r.num_types << ',' << r.num_attributes << ',' << r.num_classes << ','
       << r.num_permissions << ','
       << (r.avg_defined() ? format_decimal(r.avg_boxes_per_rule()) : "") << ','
       << format_decimal(r.coverage_ratio());
    for (auto n : r.bpr_histogram) os << ',' << n;
    os << ',' << format_rpb(r.rpb_histogram) << "\n";
  }
}

inline void write_delta_csv(std::ostream& os, const DeltaSeries& s) {
  os << "# sebox delta schema " << kMetricsSchemaVersion << "\n"
     << "commit_index,commit,delta_rules,delta_boxes,ratio\n";
  for (const auto& d : s.rows)
    os << d.commit_index << ',' << d.commit << ',' << d.delta_rules << ','
       << d.delta_boxes << ',' << (d.ratio ? format_decimal(*d.ratio) : "undefined")
       << "\n";
  os << "# mean_ratio "
     << (s.mean_ratio ? format_decimal(*s.mean_ratio) : "undefined") << "\n";
}

inline void write_age_csv(std::ostream& os, const AgeReport& r) {
  os << "position,type,last_changed_index,age,cdf\n";
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const auto& a = r.records[i];
    double cdf = 0;
    for (const auto& p : r.cdf)
      if (p.age == a.age) cdf = p.fraction;
    os << (a.position == Position::Subject ? "subject" : "object") << ','
       << a.type_name << ',' << a.last_changed_index << ',' << a.age << ','
       << format_decimal(cdf) << "\n";
  }
}

inline void write_fit_csv(std::ostream& os, std::span<const FitSegment> segs) {
  os << "segment,start_index,end_index,points,ln_a,b,rms_residual\n";
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& s = segs[i];
    os << i << ',' << format_decimal(s.start_index) << ','
       << format_decimal(s.end_index) << ',' << s.points << ','
       << format_decimal(s.ln_a) << ',' << format_decimal(s.b) << ','
       << format_decimal(s.rms_residual) << "\n";
  }
}

inline void write_org_csv(std::ostream& os, const OrgReport& r) {
  os << "bucket,organization,commits\n";
  for (const auto& [org, n] : r.totals) os << "total," << org << ',' << n << "\n";
  for (const auto& [label, counts] : r.buckets)
    for (const auto& [org, n] : counts) os << label << ',' << org << ',' << n << "\n";
}

// Keys serialize in sorted order.
inline nlohmann::json to_json(const MetricsRow& r) {
  nlohmann::json j;
  j["commit"] = r.commit;
  j["commit_index"] = r.commit_index;
  j["author_timestamp"] = r.author_timestamp;
  j["failed"] = r.failed;
  j["num_allow_rules"] = r.num_allow_rules;
  j["num_neverallow_rules"] = r.num_neverallow_rules;
  j["num_boxes"] = r.num_boxes;
  j["num_neverallow_boxes"] = r.num_neverallow_boxes;
  j["num_assertion_violations"] = r.num_assertion_violations;
  j["num_types"] = r.num_types;
  j["num_attributes"] = r.num_attributes;
  j["num_classes"] = r.num_classes;
  j["num_permissions"] = r.num_permissions;
  j["allow_rule_boxes"] = r.allow_rule_boxes;
  j["covered_boxes"] = r.covered_boxes;
  j["universe_boxes"] = r.universe_boxes;
  j["bpr_histogram"] = r.bpr_histogram;
  nlohmann::json rpb = nlohmann::json::object();
  for (const auto& [k, v] : r.rpb_histogram) rpb[std::to_string(k)] = v;
  j["rpb_histogram"] = rpb;
  if (r.avg_defined()) j["avg_boxes_per_rule"] = format_decimal(r.avg_boxes_per_rule());
  else j["avg_boxes_per_rule"] = nullptr;
  j["coverage_ratio"] = format_decimal(r.coverage_ratio());
  return j;
}

inline MetricsRow metrics_from_json(const nlohmann::json& j) {
  try {
    MetricsRow r;
    r.commit = j.at("commit").get<std::string>();
    r.commit_index = j.at("commit_index").get<std::int64_t>();
    r.author_timestamp = j.at("author_timestamp").get<std::int64_t>();
    r.failed = j.at("failed").get<bool>();
    r.num_allow_rules = j.at("num_allow_rules").get<std::uint64_t>();
    r.num_neverallow_rules = j.at("num_neverallow_rules").get<std::uint64_t>();
    r.num_boxes = j.at("num_boxes").get<std::uint64_t>();
    r.num_neverallow_boxes = j.at("num_neverallow_boxes").get<std::uint64_t>();
    r.num_assertion_violations = j.at("num_assertion_violations").get<std::uint64_t>();
    r.num_types = j.at("num_types").get<std::uint64_t>();
    r.num_attributes = j.at("num_attributes").get<std::uint64_t>();
    r.num_classes = j.at("num_classes").get<std::uint64_t>();
    r.num_permissions = j.at("num_permissions").get<std::uint64_t>();
    r.allow_rule_boxes = j.at("allow_rule_boxes").get<std::uint64_t>();
    r.covered_boxes = j.at("covered_boxes").get<std::uint64_t>();
    r.universe_boxes = j.at("universe_boxes").get<std::uint64_t>();
    r.bpr_histogram = j.at("bpr_histogram").get<BprHistogram>();
    for (const auto& [k, v] : j.at("rpb_histogram").items())
      r.rpb_histogram[std::stoull(k)] = v.get<std::uint64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("metrics json: ") + e.what());
  }
}

// Reads `index,value` lines; blank lines, '#' comments and a non-numeric
// header row are skipped.
inline std::vector<SeriesPoint> read_series_csv(std::istream& in) {
  std::vector<SeriesPoint> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error(ErrorCode::InvalidArgument,
                  "series line " + std::to_string(lineno) + ": expected index,value");
    try {
      std::size_t used = 0;
      std::string a = line.substr(0, comma), b = line.substr(comma + 1);
      double x = std::stod(a, &used);
      double y = std::stod(b);
      out.push_back({x, y});
    } catch (const std::logic_error&) {
      if (out.empty() && lineno == 1) continue;
      throw Error(ErrorCode::InvalidArgument,
                  "series line " + std::to_string(lineno) + ": not numeric");
    }
  }
  return out;
}

inline nlohmann::json to_json(const CommitRecord& c) {
  return {{"hash", c.hash},
          {"parents", c.parents},
          {"author_email", c.author_email},
          {"author_timestamp", c.author_timestamp},
          {"committer_timestamp", c.committer_timestamp},
          {"commit_index", c.commit_index},
          {"subject_line", c.subject_line}};
}

}  // namespace sebox
